"""Gaussian free fields on ``S_R``: exact samplers, UV cutoffs, the compactly
supported convolution cutoff and the Wick counterterms.

The free field ``X_R`` has covariance ``G_R = (1 - Delta_R)^-1``. Two cutoffs
are provided: the spectral one ``K_{R,N} = (1 - Delta_R/N^2)^-1`` and a
convolution with a compactly supported zonal kernel ``K^_{R,N}`` whose degree
symbols ``k^_l`` are computed by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .sphere import (
    SpectralField,
    ZonalMultiplier,
    apply_multiplier,
    build_multiplier,
    default_band_limit,
    n_coeffs,
)
from .streams import stream_rng

__all__ = [
    "TraceSum",
    "InsufficientBandLimit",
    "counterterm",
    "trace_sum",
    "BumpProfile",
    "build_bump",
    "hat_multiplier",
    "hat_counterterm",
    "CutoffSpec",
    "apply_cutoff",
    "cutoff_multiplier",
    "GaussianSampler",
    "sample_free",
    "required_band_limit",
]


class InsufficientBandLimit(ValueError):
    """Raised when a truncated trace sum cannot be certified to the requested tolerance."""


@dataclass(frozen=True)
class TraceSum:
    """Truncated spectral sum with a bound on (or estimate of) the omitted tail.

    Attributes
    ----------
    value : float
        Partial sum over ``0 <= l <= L_max``. For band-limited fields this is
        the exact pointwise variance.
    tail : float
        Upper bound for the omitted tail when ``certified``; otherwise an
        estimate obtained by doubling ``L_max``.
    L_max : int
    certified : bool
        True when ``tail`` is a rigorous bound below the requested tolerance.
    """

    value: float
    tail: float
    L_max: int
    certified: bool

    def __float__(self) -> float:
        return self.value

    @property
    def full_spectrum(self) -> float:
        """Midpoint estimate of the untruncated sum."""
        return self.value + 0.5 * self.tail


def _tail_integral(u0: float, a: float, b: float, kappa: float) -> float:
    """``int_{u0}^inf du / ((1 + a u)(1 + b u)^kappa)``."""
    if kappa == 2 and abs(a - b) > 1e-3 * a:
        d = a - b
        r0 = math.log((1 + a * u0) / (1 + b * u0))
        return a / d**2 * (math.log(a / b) - r0) - 1.0 / (d * (1 + b * u0))
    val, err = integrate.quad(
        lambda u: 1.0 / ((1 + a * u) * (1 + b * u) ** kappa),
        u0,
        np.inf,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return val


def trace_sum(
    R: float,
    N: float,
    kappa: float,
    L_max: int,
    prefactor: float | None = None,
) -> TraceSum:
    """``prefactor * sum_l (2l+1) / ((1+lam_l)(1+lam_l/N^2)^kappa)``.

    The default prefactor ``1/(2 R^2)`` gives the generalized sum that grows
    like ``log N``; :func:`counterterm` uses ``kappa=2`` and ``1/(4 pi R^2)``.
    The tail is bounded by integral comparison in ``u = l(l+1)``.
    """
    if R <= 0 or N <= 0:
        raise ValueError("R and N must be positive")
    if kappa <= 0:
        raise ValueError("kappa must be positive for a convergent sum")
    if prefactor is None:
        prefactor = 1.0 / (2.0 * R**2)
    l = np.arange(L_max + 1, dtype=float)
    lam = l * (l + 1) / R**2
    terms = (2 * l + 1) / ((1 + lam) * (1 + lam / N**2) ** kappa)
    value = prefactor * float(math.fsum(terms))
    u0 = L_max * (L_max + 1.0)
    corr = 1.0 + 1.0 / (2 * L_max + 2)
    tail = prefactor * corr * _tail_integral(u0, 1 / R**2, 1 / (R * N) ** 2, kappa)
    return TraceSum(value, tail, L_max, True)


def counterterm(
    R: float,
    N: float,
    L_max: int | None = None,
    tol: float = 1e-8,
    strict: bool = False,
) -> TraceSum:
    """Wick counterterm ``c_{R,N} = Tr(K G K) / (4 pi R^2)`` truncated at ``L_max``.

    Parameters
    ----------
    R, N : float
        Radius and cutoff.
    L_max : int, optional
        Band limit, default ``ceil(4 N R)``.
    tol : float
        Target for the certified tail bound.
    strict : bool
        Raise :class:`InsufficientBandLimit` instead of flagging when the tail
        bound exceeds ``tol``.

    Returns
    -------
    TraceSum
        ``value`` is the partial sum, which is the exact variance of a field
        band-limited at ``L_max``; ``tail`` bounds the rest; ``certified`` is
        False when ``tail > tol``.

    Examples
    --------
    >>> round(counterterm(1.0, 1.0, 0).value, 7)
    0.0795775
    """
    if L_max is None:
        L_max = default_band_limit(R, N)
    if L_max < 0:
        raise ValueError("L_max must be non-negative")
    ts = trace_sum(R, N, 2, L_max, prefactor=1.0 / (4 * math.pi * R**2))
    ok = ts.tail <= tol
    if strict and not ok:
        raise InsufficientBandLimit(
            f"tail bound {ts.tail:.3e} exceeds tol {tol:.1e} at L_max={L_max}"
        )
    return TraceSum(ts.value, ts.tail, L_max, ok)


def required_band_limit(R: float, N: float, tol: float = 1e-8) -> int:
    """Smallest ``L_max`` whose certified counterterm tail is below ``tol``."""
    lo, hi = 0, max(1, default_band_limit(R, N))
    while counterterm(R, N, hi).tail > tol:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if counterterm(R, N, mid).tail > tol:
            lo = mid
        else:
            hi = mid
    return hi


# -- compactly supported bump ------------------------------------------------


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _step(t, beta: float):
    """Smooth step from 1 at ``t <= 0`` to 0 at ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = _psi(1.0 - t)
    b = beta * _psi(t)
    return a / (a + b)


@dataclass(frozen=True)
class BumpProfile:
    """Even ``C^inf`` profile ``h`` with ``h = 1`` on ``[-1/2, 1/2]`` and
    support in ``(-1, 1)``.

    The transition on ``1/2 < |t| < 1`` is
    ``psi(1-s) / (psi(1-s) + beta psi(s))`` with ``s = 2|t| - 1`` and
    ``psi(s) = exp(-1/s)``; ``beta`` tunes the radial mass.
    """

    beta: float

    def __call__(self, theta):
        th = np.abs(np.asarray(theta, dtype=float))
        out = _step(2.0 * th - 1.0, self.beta)
        return np.where(th >= 1.0, 0.0, out)

    def radial_mass(self) -> float:
        """``2 pi int_0^inf h(t) t dt``."""
        return _radial_mass(self.beta)


def _radial_mass(beta: float) -> float:
    t, w = _composite_gl(0.5, 1.0, 64, 20)
    return math.pi / 4 + 2 * math.pi * float(w @ (t * _step(2 * t - 1, beta)))


def build_bump(beta: float | None = None, tol: float = 1e-10) -> BumpProfile:
    """Bump profile, solving for ``beta`` so that the radial mass is 1.

    Raises
    ------
    RuntimeError
        If the normalization cannot be bracketed or the residual exceeds ``tol``.
    """
    if beta is not None:
        if beta <= 0:
            raise ValueError("beta must be positive")
        return BumpProfile(float(beta))
    lo, hi = -30.0, 60.0
    f = lambda lb: _radial_mass(math.exp(lb)) - 1.0
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise RuntimeError(
            f"normalization not bracketed on log(beta) in [{lo}, {hi}]: "
            f"residuals {flo:.3e}, {fhi:.3e}"
        )
    lb = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    bump = BumpProfile(math.exp(lb))
    resid = abs(bump.radial_mass() - 1.0)
    if resid > tol:
        raise RuntimeError(f"normalization residual {resid:.2e} exceeds {tol:.0e}")
    return bump


@lru_cache(maxsize=1)
def _default_bump() -> BumpProfile:
    return build_bump()


def _legendre_moments(x, wf, L_max: int) -> np.ndarray:
    """``sum_k wf_k P_l(x_k)`` for ``l = 0..L_max``."""
    out = np.empty(L_max + 1)
    p_prev = np.ones_like(x)
    out[0] = wf.sum()
    if L_max == 0:
        return out
    p = x.copy()
    out[1] = wf @ p
    for l in range(1, L_max):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        out[l + 1] = wf @ p
    return out


def _composite_gl(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _hat_values(R: float, N: float, beta: float, L_max: int, tol: float) -> np.ndarray:
    rn = R * N
    bump = BumpProfile(beta)

    def quad(panels):
        parts = []
        for a, b in ((0.0, 0.5), (0.5, 1.0)):
            th, w = _composite_gl(a, b, panels, 20)
            wf = 2 * np.pi * w * rn * np.sin(th / rn) * bump(th)
            parts.append(_legendre_moments(np.cos(th / rn), wf, L_max))
        return parts[0] + parts[1]

    panels = 4
    prev = quad(panels)
    for _ in range(12):
        panels *= 2
        cur = quad(panels)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur
    raise RuntimeError(
        f"hat multiplier quadrature did not converge to {tol:.0e} "
        f"(last change {np.max(np.abs(cur - prev)):.2e})"
    )


@lru_cache(maxsize=64)
def _hat_cached(R, N, beta, L_max, tol):
    return _hat_values(R, N, beta, L_max, tol)


def hat_multiplier(
    R: float,
    N: float,
    h: BumpProfile | None = None,
    L_max: int | None = None,
    tol: float = 1e-12,
) -> ZonalMultiplier:
    """Degree symbols ``k^_l`` of the compactly supported convolution cutoff.

    ``k^_l = 2 pi int_0^1 P_l(cos(t/RN)) RN sin(t/RN) h(t) dt``, evaluated by
    composite Gauss--Legendre quadrature refined until successive panel
    doublings agree to ``tol`` for every degree.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if h is None:
        h = _default_bump()
    if L_max is None:
        L_max = default_band_limit(R, N)
    vals = _hat_cached(float(R), float(N), float(h.beta), int(L_max), float(tol))
    return ZonalMultiplier(vals.copy(), "Khat_RN")


def hat_counterterm(
    R: float,
    N: float,
    h: BumpProfile | None = None,
    L_max: int | None = None,
) -> TraceSum:
    """``c^_{R,N} = Tr(K^ G K^) / (4 pi R^2)`` truncated at ``L_max``.

    The tail is not certified: ``tail`` is the change of the sum when the band
    limit is doubled (``k^_l`` decays faster than any power of ``l``).
    """
    if L_max is None:
        L_max = default_band_limit(R, N)
    L2 = 2 * L_max + 8
    k = hat_multiplier(R, N, h, L2).values
    l = np.arange(L2 + 1)
    lam = l * (l + 1) / R**2
    terms = (2 * l + 1) * k**2 / (1 + lam) / (4 * math.pi * R**2)
    value = float(math.fsum(terms[: L_max + 1]))
    tail = float(math.fsum(terms[L_max + 1 :]))
    return TraceSum(value, tail, L_max, False)


# -- cutoffs and samplers ----------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """UV cutoff: ``spectral`` uses ``K_{R,N}``, ``convolution`` the hat kernel."""

    N: float
    kind: str = "spectral"
    bump: BumpProfile | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.kind not in ("spectral", "convolution"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")


def cutoff_multiplier(cut: CutoffSpec, R: float, L_max: int) -> ZonalMultiplier:
    if cut.kind == "spectral":
        return build_multiplier("K_RN", R, cut.N, L_max)
    return hat_multiplier(R, cut.N, cut.bump, L_max)


def apply_cutoff(X: SpectralField, cut: CutoffSpec) -> SpectralField:
    """``K_{R,N} X`` or ``K^_{R,N} X`` according to ``cut.kind``."""
    return apply_multiplier(X, cutoff_multiplier(cut, X.R, X.L_max))


@dataclass(frozen=True, eq=False)
class GaussianSampler:
    """Exact sampler of the centered Gaussian with zonal covariance.

    Draws are reproducible from ``(seed, stream, index)``; a new stream id
    gives an independent sampler.
    """

    R: float
    covariance: ZonalMultiplier
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if np.any(self.covariance.values < 0):
            raise ValueError("covariance entries must be non-negative")

    @property
    def L_max(self) -> int:
        return self.covariance.L_max

    @classmethod
    def free(cls, R, N, L_max=None, seed=0, stream=0, kind="G_RN"):
        """Sampler of ``X_R`` (``kind='G_R'``) or ``X_{R,N}`` (``'G_RN'``)."""
        if L_max is None:
            L_max = default_band_limit(R, N)
        return cls(R, build_multiplier(kind, R, N, L_max), seed, stream)

    @classmethod
    def hat(cls, R, N, L_max=None, seed=0, stream=0, h=None):
        """Sampler of ``K^ X_R``."""
        if L_max is None:
            L_max = default_band_limit(R, N)
        k = hat_multiplier(R, N, h, L_max)
        g = build_multiplier("G_R", R, N, L_max)
        return cls(R, ZonalMultiplier(k.values**2 * g.values, "KhatGKhat"), seed, stream)

    def with_stream(self, stream: int) -> "GaussianSampler":
        return GaussianSampler(self.R, self.covariance, self.seed, stream)

    def sample(self, size: int | None = None, index: int = 0) -> np.ndarray:
        """Coefficient arrays, shape ``(size, n_coeffs)`` or ``(n_coeffs,)``."""
        rng = stream_rng(self.seed, self.stream, index)
        shape = (n_coeffs(self.L_max),) if size is None else (size, n_coeffs(self.L_max))
        return rng.standard_normal(shape) * np.sqrt(self.covariance.expanded())


def sample_free(sampler: GaussianSampler, index: int = 0) -> SpectralField:
    """One draw as a :class:`SpectralField`."""
    return SpectralField(sampler.R, sampler.L_max, sampler.sample(None, index))
