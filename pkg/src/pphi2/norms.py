"""Weighted Bessel-potential norms on the plane and on the sphere, the weight
inequalities used for the energy estimate, and the energy-inequality monitor.

Convention: ``||f||_{L_p(W)} = ||W f||_{L_p}``, so ``L_p(v^{1/p})`` is the norm
``(int v |f|^p)^{1/p}``. Plane operators ``(1 - Delta)^{a/2}`` act by FFT on the
periodic box of a :class:`~pphi2.stereo.PlaneGrid` after a smooth radial taper.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .sphere import SphereGrid, SpectralField
from .stereo import PlaneField, PlaneGrid, weight_v, weight_w
from .wick import PolynomialSpec, wick_power

__all__ = [
    "WeightSpec",
    "NormSpec",
    "taper",
    "bessel_potential",
    "bessel_norm_plane",
    "NormReport",
    "bessel_norm_sphere",
    "holder_pairing",
    "energy_exponent",
    "EnergyLedger",
    "energy_report",
    "WeightCheck",
    "weight_inequality_check",
    "calibrate_L0",
    "probe_suite",
]


@dataclass(frozen=True)
class WeightSpec:
    """Product of powers of ``w_R``, ``v_L`` and 1.

    ``factors`` is a tuple of ``(kind, parameter, exponent)`` with kind in
    ``{"w", "v"}``; the empty tuple is the unit weight.
    """

    factors: tuple = ()

    @classmethod
    def one(cls) -> "WeightSpec":
        return cls(())

    @classmethod
    def w(cls, R: float, exponent: float = 1.0) -> "WeightSpec":
        return cls((("w", float(R), float(exponent)),))

    @classmethod
    def v(cls, L: float, exponent: float = 1.0) -> "WeightSpec":
        return cls((("v", float(L), float(exponent)),))

    def __mul__(self, other: "WeightSpec") -> "WeightSpec":
        return WeightSpec(self.factors + other.factors)

    def __pow__(self, e: float) -> "WeightSpec":
        return WeightSpec(tuple((k, p, x * e) for k, p, x in self.factors))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        # accumulate in logs to avoid under/overflow of large powers
        logw = np.zeros(x.shape[:-1])
        for kind, par, e in self.factors:
            if kind == "w":
                logw += e * np.log(weight_w(x, par))
            elif kind == "v":
                logw += e * (8 * np.log(weight_w(x, par)) - math.log(4 * math.pi * par * par))
            else:
                raise ValueError(f"unknown weight kind {kind!r}")
        return np.exp(logw)

    def admissibility_constant(self, x, h: float = 1e-5) -> float:
        """``max |grad W| / W`` over the probe points ``x`` (finite differences)."""
        x = np.asarray(x, dtype=float)
        logW = lambda y: np.log(self(y))
        g = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            g.append((logW(x + e) - logW(x - e)) / (2 * h))
        return float(np.max(np.hypot(*g)))


@dataclass(frozen=True)
class NormSpec:
    """``||(1 - Delta)^{alpha/2} f||_{L_p(W)}``."""

    p: float
    alpha: float = 0.0
    weight: WeightSpec = field(default_factory=WeightSpec.one)

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be at least 1")


def taper(grid: PlaneGrid, start: float = 0.75, stop: float = 0.97) -> np.ndarray:
    """Smooth radial cutoff: 1 for ``|x| <= start*S``, 0 for ``|x| >= stop*S``."""
    r = np.linalg.norm(grid.points, axis=-1) / grid.S
    t = np.clip((r - start) / (stop - start), 0.0, 1.0)
    out = np.ones_like(t)
    mid = (t > 0) & (t < 1)
    a = np.exp(-1.0 / (1.0 - t[mid]))
    b = np.exp(-1.0 / t[mid])
    out[mid] = a / (a + b)
    out[t >= 1] = 0.0
    return out


def bessel_potential(values, grid: PlaneGrid, alpha: float, use_taper: bool = True):
    """``(1 - Delta)^{alpha/2}`` applied on the periodic box."""
    v = np.asarray(values, dtype=float)
    if use_taper:
        v = v * taper(grid)
    if alpha == 0:
        return v
    k1, k2 = grid.wavenumbers
    mult = (1.0 + k1**2 + k2**2) ** (alpha / 2)
    return np.fft.ifft2(np.fft.fft2(v, axes=(-2, -1)) * mult, axes=(-2, -1)).real


@dataclass(frozen=True)
class NormReport:
    """Norm value with truncation diagnostics.

    ``outside_mass`` is the fraction of ``int W^p`` beyond the taper start;
    ``periodization_error`` is the change when the box is doubled by zero
    padding (``nan`` unless requested).
    """

    value: float
    outside_mass: float
    periodization_error: float


def _norm_core(values, grid, spec: NormSpec, use_taper=True):
    u = bessel_potential(values, grid, spec.alpha, use_taper)
    W = spec.weight(grid.points)
    return grid.integrate(np.abs(W * u) ** spec.p) ** (1.0 / spec.p)


def bessel_norm_plane(
    f: PlaneField,
    spec: NormSpec,
    full_output: bool = False,
    tol_outside: float = 1e-8,
):
    """Weighted Bessel-potential norm of a plane field.

    Returns a float (or array for batched fields), or a :class:`NormReport`
    when ``full_output``. Warns when the weight mass beyond the taper exceeds
    ``tol_outside`` of the total.
    """
    grid = f.grid
    val = _norm_core(f.values, grid, spec)
    Wp = spec.weight(grid.points) ** spec.p
    total = grid.integrate(Wp)
    inside = grid.integrate(Wp * (taper(grid) >= 1.0))
    outside = float((total - inside) / total) if total > 0 else 0.0
    if outside > tol_outside:
        warnings.warn(
            f"weight mass beyond the taper is {outside:.2e} of the total",
            RuntimeWarning,
            stacklevel=2,
        )
    if not full_output:
        return float(val) if np.ndim(val) == 0 else val
    big = PlaneGrid(2 * grid.S, 2 * grid.n_side)
    n = grid.n_side
    padded = np.zeros(f.values.shape[:-2] + (2 * n, 2 * n))
    padded[..., n // 2 : n // 2 + n, n // 2 : n // 2 + n] = f.values * taper(grid)
    val2 = _norm_core(padded, big, spec, use_taper=False)
    err = float(np.max(np.abs(val2 - val)))
    return NormReport(float(np.max(val)) if np.ndim(val) else float(val), outside, err)


def bessel_norm_sphere(phi: SpectralField, alpha: float, p: float, grid: SphereGrid | None = None):
    """``||(1 - Delta_R)^{alpha/2} phi||_{L_p(S_R)}``.

    Exact by Parseval for ``p = 2``; otherwise by quadrature on a grid that
    integrates degree ``ceil(p)+2`` products exactly (default).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    L = phi.L_max
    l = np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)
    c = (1.0 + l * (l + 1) / phi.R**2) ** (alpha / 2) * phi.coeffs
    if p == 2:
        return float(np.sqrt(np.sum(c * c)))
    if grid is None:
        grid = SphereGrid.for_degree(phi.R, L, int(math.ceil(p)) + 2)
    vals = grid.synthesize(c, L)
    return float(grid.integrate(np.abs(vals) ** p) ** (1 / p))


def holder_pairing(f: PlaneField, g: PlaneField, alpha: float, p: float, w: WeightSpec):
    """Both sides of ``|<f, g>_{L2(w^{1/2})}| <= C ||f||_{L^a_p(w^{1/p})} ||g||_{L^-a_q(w^{1/q})}``.

    Returns ``(lhs, product_of_norms, ratio)``; the ratio is a lower bound for
    the constant ``C``.
    """
    if p <= 1:
        raise ValueError("need p > 1")
    q = p / (p - 1)
    grid = f.grid
    lhs = abs(float(grid.integrate(w(grid.points) * f.values * g.values)))
    nf = bessel_norm_plane(f, NormSpec(p, alpha, w ** (1 / p)))
    ng = bessel_norm_plane(g, NormSpec(q, -alpha, w ** (1 / q)))
    rhs = nf * ng
    return lhs, rhs, (lhs / rhs if rhs > 0 else 0.0)


# -- energy inequality -------------------------------------------------------


def energy_exponent(n: int, kappa: float) -> float:
    """Exponent ``p`` with ``1/p = (2 - kappa (n-1)(n-2)) / 2n``."""
    if not 0 < kappa < 2 / ((n - 1) * (n - 2)):
        raise ValueError("need 0 < kappa < 2/((n-1)(n-2))")
    return 2 * n / (2 - kappa * (n - 1) * (n - 2))


@dataclass
class EnergyLedger:
    """Per-step terms of the energy inequality along one trajectory.

    Rows correspond to interior samples (centered time differences).

    Attributes
    ----------
    times : ndarray
    dt_term : ndarray
        ``8 d/dt ||Psi||^2_{L2(v^{1/2})}``.
    n_term : ndarray
        ``||Psi||^n_{Ln(v^{1/n})}``.
    rhs_terms : ndarray, shape (steps, n)
        ``||Z^{:k:}||^p_{L^{-kappa}_p(v^{1/p})}`` for ``k = 0..n-1``.
    pairings : ndarray, shape (steps, n, n-1)
        ``|<Z^{:k:}, Psi^m>_{L2(v^{1/2})}|`` for ``k < n``, ``1 <= m < n``.
    grad_term : ndarray
        ``||grad Psi||^2_{L2(v^{1/2})}``.
    """

    times: np.ndarray
    dt_term: np.ndarray
    n_term: np.ndarray
    rhs_terms: np.ndarray
    pairings: np.ndarray
    grad_term: np.ndarray
    p: float
    kappa: float

    @property
    def lhs(self) -> np.ndarray:
        return self.dt_term + self.n_term

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_terms.sum(axis=1)

    @property
    def ratio(self) -> np.ndarray:
        return self.lhs / self.rhs

    def fitted_C(self) -> float:
        """Smallest ``C`` with ``lhs <= C rhs`` at every step (0 if ``lhs <= 0``)."""
        return float(max(0.0, np.max(self.ratio)))

    def holds(self, C: float) -> bool:
        return bool(np.all(self.lhs <= C * self.rhs))

    def pairing_constant(self, delta: float) -> float:
        """Smallest ``C`` with ``pair <= C ||Z||^p + delta (grad + n_term + 1)``."""
        slack = delta * (self.grad_term + self.n_term + 1.0)
        need = (self.pairings - slack[:, None, None]) / self.rhs_terms[:, :, None]
        return float(max(0.0, np.max(need)))


def _grad_sq(values, grid: PlaneGrid):
    k1, k2 = grid.wavenumbers
    F = np.fft.fft2(values, axes=(-2, -1))
    g1 = np.fft.ifft2(1j * k1 * F, axes=(-2, -1)).real
    g2 = np.fft.ifft2(1j * k2 * F, axes=(-2, -1)).real
    return g1 * g1 + g2 * g2


def energy_report(
    psi,
    z,
    times,
    c: float,
    spec: PolynomialSpec,
    L: float,
    grid: PlaneGrid,
    kappa: float = 0.05,
    p: float | None = None,
) -> EnergyLedger:
    """Ledger of the energy inequality along a sampled trajectory.

    Parameters
    ----------
    psi, z : ndarray, shape (T, n_side, n_side)
        Pushforwards of the remainder and of the Gaussian part at times
        ``times``. Wick powers of ``z`` use the counterterm ``c``.
    times : ndarray
        Uniformly spaced sample times.
    L : float
        Parameter of the weight ``v_L``.

    Raises
    ------
    ValueError
        For non-uniform sampling or fewer than three samples.
    """
    psi = np.asarray(psi, dtype=float)
    z = np.asarray(z, dtype=float)
    times = np.asarray(times, dtype=float)
    if psi.shape != z.shape or psi.shape[0] != times.size:
        raise ValueError("psi, z and times must agree in length")
    if times.size < 3:
        raise ValueError("need at least three samples")
    d = np.diff(times)
    if np.max(np.abs(d - d[0])) > 1e-9 * max(abs(d[0]), 1.0):
        raise ValueError("energy_report needs uniform sampling")
    n = spec.degree
    if p is None:
        p = energy_exponent(n, kappa)
    v = weight_v(grid.points, L)
    tp = taper(grid)
    l2 = grid.integrate(v * psi**2)
    dt_term = 8 * (l2[2:] - l2[:-2]) / (2 * d[0])
    inner = slice(1, -1)
    ps = psi[inner]
    zs = z[inner]
    n_term = grid.integrate(v * np.abs(ps) ** n)
    grad_term = grid.integrate(v * _grad_sq(ps * tp, grid))
    rhs = np.empty((ps.shape[0], n))
    pairs = np.empty((ps.shape[0], n, n - 1))
    for k in range(n):
        zk = wick_power(zs, k, c)
        u = bessel_potential(zk, grid, -kappa)
        rhs[:, k] = grid.integrate(v * np.abs(u) ** p)
        for m in range(1, n):
            pairs[:, k, m - 1] = np.abs(grid.integrate(v * zk * ps**m))
    return EnergyLedger(times[inner], dt_term, n_term, rhs, pairs, grad_term, p, kappa)


# -- weight inequalities -----------------------------------------------------


@dataclass(frozen=True)
class WeightCheck:
    """Margins ``lhs - rhs`` of the three weight inequalities and the Hölder chain."""

    L: float
    R: float
    margins: np.ndarray  # (probes, 3) for (A), (B), (C)
    chain_margins: np.ndarray  # (probes, 3) for p = 1, 2, 3
    chain_constants: np.ndarray  # ||w^{-p/2} v^{(n-2)/2n}||_{L_{2n/(n-2)}}, p = 1, 2, 3

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins >= 0) and np.all(self.chain_margins >= 0))


def _laplacian(values, grid):
    k1, k2 = grid.wavenumbers
    F = np.fft.fft2(values, axes=(-2, -1))
    return np.fft.ifft2(-(k1**2 + k2**2) * F, axes=(-2, -1)).real


def _grad(values, grid):
    k1, k2 = grid.wavenumbers
    F = np.fft.fft2(values, axes=(-2, -1))
    return (
        np.fft.ifft2(1j * k1 * F, axes=(-2, -1)).real,
        np.fft.ifft2(1j * k2 * F, axes=(-2, -1)).real,
    )


def probe_suite(L: float, grid: PlaneGrid, count: int = 8, seed: int = 0) -> np.ndarray:
    """Smooth, effectively compactly supported probes scaled to ``L``.

    Each probe is a sum of three Gaussian bumps (widths ``0.3L..L``, centres
    within ``|c| <= 2L``) times a slow plane wave.
    """
    rng = np.random.default_rng(seed)
    x = grid.points
    out = np.zeros((count,) + x.shape[:-1])
    for i in range(count):
        for _ in range(3):
            c = rng.uniform(-2 * L, 2 * L, 2)
            s = L * rng.uniform(0.3, 1.0)
            k = rng.normal(0, 1.0 / s, 2)
            amp = rng.normal()
            r2 = np.sum((x - c) ** 2, axis=-1)
            out[i] += amp * np.exp(-r2 / (2 * s * s)) * np.cos(x @ k)
    return out


def weight_inequality_check(R: float, L: float, probes, grid: PlaneGrid, n: int = 4) -> WeightCheck:
    """Evaluate both sides of the weight inequalities (A)-(C) on probe fields.

    With ``W = w_R`` and ``v = v_L``:

    (A) ``<Psi, v (-W^-1 Delta) Psi> >= 1/2 int W^-1 v |grad Psi|^2 - 1/8 int W^-1 v Psi^2``
    (B) ``<Psi, v (-W^-1 Delta)^2 Psi> >= 1/2 int W^-2 v (Delta Psi)^2 - 1/8 int W^-2 v Psi^2``
    (C) ``<Psi, v (-W^-1 Delta)^3 Psi> >= 1/2 int W^-3 v |grad Delta Psi|^2 - 1/8 int W^-3 v Psi^2``

    and the chain ``||Psi||_{L2(W^{-p/2} v^{1/2})} <= ||Psi||_{Ln(v^{1/n})}``,
    ``p = 1, 2, 3``, whose middle Hölder constant is also reported.
    """
    if R < L:
        raise ValueError("need R >= L")
    probes = np.asarray(probes, dtype=float)
    x = grid.points
    W = weight_w(x, R)
    v = weight_v(x, L)
    Wi = 1.0 / W
    u = probes
    iters = []
    for _ in range(3):
        u = -Wi * _laplacian(u, grid)
        iters.append(u)
    lhs = np.stack([grid.integrate(probes * v * it) for it in iters], axis=-1)
    g1, g2 = _grad(probes, grid)
    lap = _laplacian(probes, grid)
    h1, h2 = _grad(lap, grid)
    rhs_A = 0.5 * grid.integrate(Wi * v * (g1**2 + g2**2)) - 0.125 * grid.integrate(Wi * v * probes**2)
    rhs_B = 0.5 * grid.integrate(Wi**2 * v * lap**2) - 0.125 * grid.integrate(Wi**2 * v * probes**2)
    rhs_C = 0.5 * grid.integrate(Wi**3 * v * (h1**2 + h2**2)) - 0.125 * grid.integrate(
        Wi**3 * v * probes**2
    )
    margins = lhs - np.stack([rhs_A, rhs_B, rhs_C], axis=-1)
    ln = grid.integrate(v * np.abs(probes) ** n) ** (1 / n)
    chain = []
    consts = []
    r = 2 * n / (n - 2)
    for pw in (1, 2, 3):
        l2 = np.sqrt(grid.integrate(Wi**pw * v * probes**2))
        chain.append(ln - l2)
        consts.append(float(grid.integrate((Wi ** (pw / 2) * v ** ((n - 2) / (2 * n))) ** r) ** (1 / r)))
    return WeightCheck(L, R, margins, np.stack(chain, axis=-1), np.array(consts))


def calibrate_L0(candidates=(1, 2, 4, 8, 16), count: int = 8, n_side: int = 256, seed: int = 0):
    """Smallest ``L`` in ``candidates`` passing :func:`weight_inequality_check`
    with ``R = L`` and ``R = 2L`` on the probe suite; returns ``(L0, checks)``."""
    checks = []
    for L in candidates:
        grid = PlaneGrid(8.0 * L, n_side)
        probes = probe_suite(L, grid, count, seed)
        res = [weight_inequality_check(R, L, probes, grid) for R in (L, 2 * L)]
        checks.extend(res)
        if all(c.passed for c in res):
            return L, checks
    return None, checks
