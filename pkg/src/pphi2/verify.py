"""Verification harness: reflection positivity, rotation invariance, UV
convergence rates, tightness moments and exponential integrability.

Test functions come from a small versioned catalog of polynomial cap bumps so
that statistical checks are fixed before they are run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    IntegratorConfig,
    LangevinModel,
    LangevinState,
    default_dt,
    integrated_autocorr_time,
    run_chain,
)
from .gaussian import (
    GaussianSampler,
    counterterm,
    hat_counterterm,
    hat_multiplier,
)
from .norms import WeightSpec, bessel_potential, energy_report
from .sphere import (
    GridField,
    SphereGrid,
    SpectralField,
    ZonalMultiplier,
    build_multiplier,
    default_band_limit,
    real_sph_harm,
    reflect_coeffs,
)
from .stereo import PlaneField, PlaneGrid, j_R_inverse, pushforward_field, reflect_plane, weight_v, weight_w
from .wick import PolynomialSpec, interaction_Y, wick_polynomial

__all__ = [
    "CATALOG_VERSION",
    "Cap",
    "default_caps",
    "HalfSphereRegion",
    "OUTER_FUNCTIONS",
    "CylindricalFunctional",
    "reflect_field",
    "GramReport",
    "covariance_symbols",
    "rp_gram_gaussian",
    "MCGramReport",
    "rp_mc_interacting",
    "zonal_two_point_check",
    "SymmetryReport",
    "symmetry_check",
    "RateFit",
    "y_variance_exact",
    "y_variance_mc",
    "strip_variance",
    "x_norm_distance",
    "uv_rate_check",
    "TightnessRow",
    "tightness_moments",
    "IntegrabilityReport",
    "hairer_steele",
    "integrability_check",
    "EnergyMonitorReport",
    "energy_monitor",
    "StationarityReport",
    "stationarity_check",
    "plane_moment",
    "plane_source",
    "tightness_band",
    "two_point_pairs",
]

CATALOG_VERSION = "1"


# -- catalog -----------------------------------------------------------------


@dataclass(frozen=True)
class Cap:
    """Zonal cap bump ``b(x.e / R)`` with ``b(t) = ((t - cos r)/(1 - cos r))_+^k``.

    ``center`` is a unit vector, ``radius`` the angular radius.
    """

    center: tuple[float, float, float]
    radius: float
    power: int = 6

    def __post_init__(self):
        e = np.asarray(self.center, dtype=float)
        e = e / np.linalg.norm(e)
        object.__setattr__(self, "center", tuple(float(v) for v in e))
        if not 0 < self.radius < math.pi:
            raise ValueError("cap radius must lie in (0, pi)")

    def profile(self, t) -> np.ndarray:
        c = math.cos(self.radius)
        s = (np.asarray(t, dtype=float) - c) / (1 - c)
        return np.where(s > 0, np.clip(s, 0, None) ** self.power, 0.0)

    def __call__(self, points, R: float) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.profile(pts @ np.asarray(self.center) / R)

    def legendre_profile(self, L: int) -> np.ndarray:
        """``beta_l = 2 pi int b(t) P_l(t) dt`` for ``l <= L`` (exact Gauss rule)."""
        c = math.cos(self.radius)
        n = (L + self.power) // 2 + 2
        x, w = np.polynomial.legendre.leggauss(n)
        t = c + (1 - c) * 0.5 * (x + 1)
        wt = 0.5 * (1 - c) * w * self.profile(t) * 2 * np.pi
        out = np.empty(L + 1)
        p_prev, p = np.ones_like(t), t
        out[0] = wt.sum()
        if L >= 1:
            out[1] = wt @ t
        for l in range(1, L):
            p_prev, p = p, ((2 * l + 1) * t * p - l * p_prev) / (l + 1)
            out[l + 1] = wt @ p
        return out

    def coeffs(self, R: float, L: int) -> np.ndarray:
        """Harmonic coefficients ``R beta_l Y_lm(e)`` on ``S_R`` up to degree ``L``."""
        e = np.asarray(self.center)
        Y = real_sph_harm(L, e[2], math.atan2(e[1], e[0]), 1.0)
        beta = self.legendre_profile(L)
        return R * np.repeat(beta, 2 * np.arange(L + 1) + 1) * Y

    def rotated(self, rot: Callable) -> "Cap":
        """Cap with centre ``rot(center)``; ``rot`` acts on unit vectors."""
        return Cap(tuple(np.asarray(rot(np.asarray(self.center)))), self.radius, self.power)

    def reflected(self) -> "Cap":
        e = self.center
        return Cap((-e[0], e[1], e[2]), self.radius, self.power)

    def in_half(self, R: float, N: float, sign: int = 1) -> bool:
        """Analytic support test ``supp subset {sign x1 > 1/N}``."""
        ang = math.acos(max(-1.0, min(1.0, sign * self.center[0])))
        if ang + self.radius >= math.pi:
            return False
        return R * math.cos(ang + self.radius) > 1.0 / N


def default_caps(R: float = 1.0, N: float = 2.0, count: int = 8) -> list[Cap]:
    """Deterministic catalog of caps supported in ``{x1 > 1/N}``."""
    margin = math.acos(min(1.0, 1.0 / (N * R)))
    r = 0.45 * margin
    out = []
    for i in range(count):
        tilt = 0.5 * margin * (i % 4) / 3
        az = 2 * math.pi * i / count + 0.3 * (i // 4)
        e = (math.cos(tilt), math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az))
        out.append(Cap(e, r * (1.0 - 0.1 * (i // 4))))
    for c in out:
        assert c.in_half(R, N)
    return out


@dataclass(frozen=True)
class HalfSphereRegion:
    """``{sign x1 > margin}`` on ``S_R``; evaluated on nodes with the open condition."""

    sign: int
    margin: float

    def mask(self, grid: SphereGrid) -> np.ndarray:
        return grid.region_mask(self.sign, self.margin)

    def verify(self, cap: Cap, grid: SphereGrid) -> bool:
        """Analytic condition and node check: every node where the cap is
        non-zero lies in the region."""
        N = 1.0 / self.margin if self.margin > 0 else math.inf
        if not cap.in_half(grid.R, N, self.sign):
            return False
        vals = cap(grid.points, grid.R)
        return bool(np.all(self.mask(grid)[vals != 0]))


OUTER_FUNCTIONS: dict[str, Callable] = {
    "one": lambda u: np.ones(u.shape[:-1]),
    "u1": lambda u: u[..., 0],
    "u2": lambda u: u[..., 1],
    "u1u2": lambda u: u[..., 0] * u[..., 1],
    "u1sq": lambda u: u[..., 0] ** 2,
    "u2sq": lambda u: u[..., 1] ** 2,
    "expi_u1": lambda u: np.exp(1j * u[..., 0]),
    "tanh_sum": lambda u: np.tanh(u[..., 0] + u[..., 1]),
}


@dataclass(frozen=True)
class CylindricalFunctional:
    """``F(phi) = G(phi(f_1), ..., phi(f_k))`` with ``G`` from :data:`OUTER_FUNCTIONS`."""

    caps: tuple[Cap, ...]
    outer: str

    def __post_init__(self):
        if self.outer not in OUTER_FUNCTIONS:
            raise ValueError(f"outer function {self.outer!r} not in catalog {CATALOG_VERSION}")

    def evaluate(self, coeffs, R: float, L: int) -> np.ndarray:
        F = np.stack([c.coeffs(R, L) for c in self.caps], axis=-1)
        return OUTER_FUNCTIONS[self.outer](np.asarray(coeffs) @ F)


def reflect_field(phi, where: str = "sphere"):
    """``Theta`` on sphere fields (spectral or node values) or plane fields."""
    if where == "plane":
        if not isinstance(phi, PlaneField):
            raise TypeError("plane reflection needs a PlaneField")
        return reflect_plane(phi)
    if isinstance(phi, SpectralField):
        return SpectralField(phi.R, phi.L_max, reflect_coeffs(phi.coeffs, phi.L_max))
    if isinstance(phi, GridField):
        if phi.grid.n_lon % 2:
            raise ValueError("grid is not reflection symmetric")
        return GridField(phi.grid, phi.values[..., phi.grid.reflection_permutation])
    raise TypeError("unsupported field type")


# -- Gaussian reflection positivity -------------------------------------------


def covariance_symbols(kind: str, R: float, N: float, L: int) -> np.ndarray:
    """Degree symbols of ``G_R``, ``K G K`` or ``Khat G Khat`` up to ``L``."""
    G = build_multiplier("G_R", R, N, L).values
    if kind == "G_R":
        return G
    if kind == "KGK":
        return build_multiplier("G_RN", R, N, L).values
    if kind == "KhatGKhat":
        return hat_multiplier(R, N, None, L).values ** 2 * G
    raise ValueError(f"unknown covariance kind {kind!r}")


@dataclass(frozen=True)
class GramReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    L_used: int
    change: float

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues.min())


def _gram_at(caps, symbols, R):
    L = len(symbols) - 1
    betas = np.array([c.legendre_profile(L) for c in caps])
    E = np.array([c.center for c in caps])
    Er = E.copy()
    Er[:, 0] *= -1
    cosg = np.clip(Er @ E.T, -1, 1)
    # Legendre series sum_l s_l (2l+1)/(4 pi) beta_i beta_j P_l(cos g)
    M = np.zeros_like(cosg)
    p_prev, p = np.ones_like(cosg), cosg.copy()
    for l in range(L + 1):
        if l == 0:
            pl = p_prev
        elif l == 1:
            pl = p
        else:
            p_prev, p = p, ((2 * l - 1) * cosg * p - (l - 1) * p_prev) / l
            pl = p
        M += symbols[l] * (2 * l + 1) / (4 * np.pi) * np.outer(betas[:, l], betas[:, l]) * pl
    return R * R * M


def rp_gram_gaussian(
    caps: Sequence[Cap],
    covariance: str | ZonalMultiplier,
    R: float = 1.0,
    N: float = 2.0,
    L: int | None = None,
    tol: float = 1e-14,
) -> GramReport:
    """Gram matrix ``M_ij = <Theta f_i, C f_j>`` for caps in ``{x1 > 1/N}``.

    For a named covariance the band limit is doubled until entries change by
    less than ``tol`` (relative to the largest entry); a
    :class:`ZonalMultiplier` is used as given.

    Raises
    ------
    ValueError
        If a cap is not supported in the positive half.
    """
    for c in caps:
        if not c.in_half(R, N):
            raise ValueError("test function support leaves the positive half-sphere")
    if isinstance(covariance, ZonalMultiplier):
        M = _gram_at(caps, covariance.values, R)
        M = 0.5 * (M + M.T)
        return GramReport(M, np.linalg.eigvalsh(M), covariance.L_max, math.nan)
    L = L or max(32, default_band_limit(R, N))
    prev = _gram_at(caps, covariance_symbols(covariance, R, N, L), R)
    for _ in range(8):
        L *= 2
        cur = _gram_at(caps, covariance_symbols(covariance, R, N, L), R)
        change = float(np.max(np.abs(cur - prev)) / max(np.max(np.abs(cur)), 1e-300))
        if change < tol:
            break
        prev = cur
    M = 0.5 * (cur + cur.T)
    return GramReport(M, np.linalg.eigvalsh(M), L, change)


# -- interacting reflection positivity ---------------------------------------


@dataclass(frozen=True)
class MCGramReport:
    matrix: np.ndarray
    min_eig: float
    jackknife_se: float
    ess: float
    draws: int
    matrix_se: np.ndarray

    @property
    def passed(self) -> bool:
        return self.min_eig >= -3 * self.jackknife_se


def _min_eig(M):
    H = 0.5 * (M + M.conj().T)
    return float(np.linalg.eigvalsh(H).min())


def rp_mc_interacting(
    functionals: Sequence[CylindricalFunctional],
    R: float = 1.0,
    N: float = 2.0,
    spec: PolynomialSpec | None = None,
    L_max: int | None = None,
    draws: int = 200_000,
    seed: int = 0,
    stream: int = 0,
    blocks: int = 50,
    interacting: bool = True,
    control_beta: float = 0.0,
) -> MCGramReport:
    """Monte Carlo Gram matrix ``E[conj F_a(Theta X) F_b(X) e^{-Y~}] / E[e^{-Y~}]``.

    ``X`` is the hat-cutoff free field, ``Y~ = Y~+ + Y~-`` the interaction
    restricted to ``{+-x1 > 1/N}`` (node masks) with the hat counterterm.
    Every draw is paired with its reflection, which leaves the weighted law
    unchanged. ``control_beta > 0`` multiplies the weight by
    ``exp(-beta phi(f) phi(Theta f) / Var phi(f))`` for the first cap of the
    first functional: a reflection-coupled weight that breaks positivity
    (negative control).

    Raises
    ------
    RuntimeError
        If the effective sample size is below 100.
    """
    spec = spec or PolynomialSpec.pure(4)
    L = L_max or default_band_limit(R, N)
    for F in functionals:
        for c in F.caps:
            if not c.in_half(R, N):
                raise ValueError("functional depends on the field outside the positive half")
    sampler = GaussianSampler.hat(R, N, L, seed, stream)
    c_hat = hat_counterterm(R, N, None, L).value
    grid = SphereGrid.for_degree(R, L, spec.degree)
    wp = grid.weights * grid.region_mask(+1, 1 / N)
    wm = grid.weights * grid.region_mask(-1, 1 / N)
    nblk = blocks
    per_block = draws // nblk
    k = len(functionals)
    num = np.zeros((nblk, k, k), dtype=complex)
    den = np.zeros(nblk)
    wsum = w2sum = 0.0
    logw_ref = None
    ctrl = functionals[0].caps[0]
    fc = ctrl.coeffs(R, L)
    fcr = ctrl.reflected().coeffs(R, L)
    sig2 = float(fc**2 @ sampler.covariance.expanded())
    for b in range(nblk):
        X = sampler.sample(per_block, index=b)
        Xr = reflect_coeffs(X, L)
        both = np.concatenate([X, Xr])
        logw = np.zeros(both.shape[0])
        if interacting:
            vals = grid.synthesize(both, L)
            P = spec.coupling * wick_polynomial(vals, spec, c_hat)
            logw -= P @ wp + P @ wm
        if control_beta:
            logw -= control_beta * (both @ fc) * (both @ fcr) / sig2
        if logw_ref is None:
            logw_ref = float(np.max(logw))
        w = np.exp(logw - logw_ref)
        Fx = np.stack([F.evaluate(both, R, L) for F in functionals], axis=-1)
        bothr = np.concatenate([Xr, X])
        Fr = np.stack([F.evaluate(bothr, R, L) for F in functionals], axis=-1)
        num[b] = np.einsum("s,sa,sb->ab", w, np.conj(Fr), Fx)
        den[b] = w.sum()
        wsum += w.sum()
        w2sum += float(w @ w)
    ess = wsum**2 / w2sum
    if ess < 100:
        raise RuntimeError(f"effective sample size {ess:.1f} below 100")
    M = num.sum(axis=0) / den.sum()
    lam = _min_eig(M)
    jk = []
    for b in range(nblk):
        Mb = (num.sum(axis=0) - num[b]) / (den.sum() - den[b])
        jk.append(_min_eig(Mb))
    jk = np.array(jk)
    se = float(math.sqrt((nblk - 1) / nblk * np.sum((jk - jk.mean()) ** 2)))
    Mj = np.array([(num.sum(axis=0) - num[b]) / (den.sum() - den[b]) for b in range(nblk)])
    mse = np.sqrt((nblk - 1) / nblk * np.sum(np.abs(Mj - Mj.mean(axis=0)) ** 2, axis=0))
    return MCGramReport(0.5 * (M + M.conj().T), lam, se, float(ess), 2 * per_block * nblk, mse)


# -- symmetry ----------------------------------------------------------------


def zonal_two_point_check(R: float, N: float, L: int, n_pairs: int = 64, seed: int = 0) -> float:
    """Max deviation between ``sum_lm G_l Y_lm(x) Y_lm(y)`` and the zonal
    Legendre series in the geodesic angle, over random pairs."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_pairs, 2, 3))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    x, y = R * u[:, 0], R * u[:, 1]
    G = build_multiplier("G_RN", R, N, L)
    Yx = real_sph_harm(L, x[:, 2] / R, np.arctan2(x[:, 1], x[:, 0]), R)
    Yy = real_sph_harm(L, y[:, 2] / R, np.arctan2(y[:, 1], y[:, 0]), R)
    direct = np.sum(Yx * Yy * G.expanded(), axis=-1)
    t = np.clip(np.sum(u[:, 0] * u[:, 1], axis=-1), -1, 1)
    zonal = np.polynomial.legendre.legval(
        t, G.values * (2 * np.arange(L + 1) + 1) / (4 * np.pi * R * R)
    )
    return float(np.max(np.abs(direct - zonal)))


@dataclass(frozen=True)
class SymmetryReport:
    names: tuple
    z: np.ndarray
    differences: np.ndarray
    standard_errors: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= 3))


def symmetry_check(
    samples,
    pairs: Sequence[tuple[str, Callable, Callable]],
    max_iat_fraction: float = 0.02,
) -> SymmetryReport:
    """Paired z-scores for ``<F> = <F o map*>`` on stationary samples.

    ``samples`` has shape ``(T, lanes, n_coeffs)`` (independent lanes).
    ``pairs`` holds ``(name, F, F_mapped)``. The standard error comes from
    lane-to-lane scatter of per-lane mean differences.

    Raises
    ------
    RuntimeError
        If the autocorrelation time exceeds ``max_iat_fraction`` of the chain
        length, so that per-lane means are unreliable.
    """
    samples = np.asarray(samples)
    T, lanes = samples.shape[:2]
    if lanes < 2:
        raise ValueError("need at least two independent lanes")
    names, zs, ds, ses = [], [], [], []
    for name, F, Fm in pairs:
        d = np.asarray(F(samples)) - np.asarray(Fm(samples))
        if np.all(d == 0):
            names.append(name)
            zs.append(0.0)
            ds.append(0.0)
            ses.append(0.0)
            continue
        tau = integrated_autocorr_time(d)
        if tau > max_iat_fraction * T:
            raise RuntimeError(f"autocorrelation time {tau:.1f} too large for {T} samples")
        lm = d.mean(axis=0)
        se = lm.std(ddof=1) / math.sqrt(lanes)
        names.append(name)
        ds.append(float(lm.mean()))
        ses.append(float(se))
        zs.append(float(lm.mean() / se) if se > 0 else 0.0)
    return SymmetryReport(tuple(names), np.array(zs), np.array(ds), np.array(ses))


# -- UV rates ----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Log-log fit of ``values`` against ``N``."""

    N: np.ndarray
    values: np.ndarray
    exponent: float
    exponent_ci: tuple[float, float]

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))


def _fit(N, values) -> RateFit:
    N = np.asarray(N, dtype=float)
    v = np.asarray(values, dtype=float)
    x, y = np.log(N), np.log(v)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    if len(N) > 2:
        resid = y - A @ coef
        s2 = float(resid @ resid) / (len(N) - 2)
        se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = 0.0
    return RateFit(N, v, slope, (slope - 2 * se, slope + 2 * se))


def _zonal_kernel(symbols, R, t):
    """``sum_l s_l (2l+1)/(4 pi R^2) P_l(t)``."""
    L = len(symbols) - 1
    return np.polynomial.legendre.legval(t, symbols * (2 * np.arange(L + 1) + 1) / (4 * np.pi * R * R))


def y_variance_exact(R, spec: PolynomialSpec, N: float, M: float, L: int | None = None) -> float:
    """``E(Y_N - Y_M)^2`` for the spectral cutoff, from the Gaussian chaos
    identity and zonal reduction; exact Gauss--Legendre quadrature in the angle.
    """
    L = L or default_band_limit(R, max(N, M))
    G = build_multiplier("G_R", R, 1, L).values
    KN = build_multiplier("K_RN", R, N, L).values
    KM = build_multiplier("K_RN", R, M, L).values
    n = spec.degree
    x, w = np.polynomial.legendre.leggauss((n * L) // 2 + 2)
    cNN = _zonal_kernel(G * KN * KN, R, x)
    cNM = _zonal_kernel(G * KN * KM, R, x)
    cMM = _zonal_kernel(G * KM * KM, R, x)
    total = 0.0
    for m in range(1, n + 1):
        a = spec.coeffs[m]
        if a == 0.0:
            continue
        integ = w @ (cNN**m - 2 * cNM**m + cMM**m)
        total += a * a * math.factorial(m) * 4 * math.pi * R * R * 2 * math.pi * R * R * integ
    return float(spec.coupling**2 * total)


def y_variance_mc(R, spec, N, M, L, draws=20_000, seed=0, stream=0):
    """Monte Carlo ``E(Y_N - Y_M)^2`` with shared white noise; returns ``(mean, se)``."""
    G = GaussianSampler.free(R, 1, L, seed, stream, kind="G_R")
    X = G.sample(draws)
    KN = build_multiplier("K_RN", R, N, L).expanded()
    KM = build_multiplier("K_RN", R, M, L).expanded()
    grid = SphereGrid.for_degree(R, L, spec.degree)
    cN = counterterm(R, N, L).value
    cM = counterterm(R, M, L).value
    d = interaction_Y(X * KN, spec, cN, grid=grid) - interaction_Y(X * KM, spec, cM, grid=grid)
    sq = d * d
    return float(sq.mean()), float(sq.std() / math.sqrt(draws))


def strip_variance(R, spec: PolynomialSpec, N: float, L: int | None = None, n_x: int = 48, n_delta: int = 256):
    """Variance of the hat-cutoff interaction integrated over ``{|x1| <= 1/N}``.

    Uses coordinates ``(x1, psi)`` around the ``x1`` axis (area element
    ``R dx1 dpsi``), reducing the double integral of ``C(x, y)^m`` to
    ``2 pi R^2 int int dx1 dy1 int_0^{2 pi} C(t)^m d delta``.
    """
    L = L or default_band_limit(R, N)
    k = hat_multiplier(R, N, None, L).values
    G = build_multiplier("G_R", R, N, L).values
    sym = k * k * G
    a = min(1.0 / N, R)
    xg, wg = np.polynomial.legendre.leggauss(n_x)
    x1 = a * xg
    w1 = a * wg
    d = 2 * np.pi * np.arange(n_delta) / n_delta
    rho = np.sqrt(np.maximum(R * R - x1 * x1, 0))
    t = (
        x1[:, None, None] * x1[None, :, None]
        + rho[:, None, None] * rho[None, :, None] * np.cos(d)[None, None, :]
    ) / (R * R)
    C = _zonal_kernel(sym, R, np.clip(t, -1, 1))
    total = 0.0
    for m in range(1, spec.degree + 1):
        am = spec.coeffs[m]
        if am == 0.0:
            continue
        I = np.einsum("i,j,ijk->", w1, w1, C**m) * (2 * np.pi / n_delta)
        total += am * am * math.factorial(m) * 2 * np.pi * R * R * I
    return float(spec.coupling**2 * total)


def x_norm_distance(R, N, M, kappa=0.1, L: int | None = None) -> float:
    """``E ||X_N - X_M||^2_{L2^{-kappa}(S_R)}`` (exact trace)."""
    L = L or default_band_limit(R, max(N, M))
    l = np.arange(L + 1)
    lam = l * (l + 1) / R**2
    G = 1 / (1 + lam)
    KN = 1 / (1 + lam / N**2)
    KM = 1 / (1 + lam / M**2)
    return float(np.sum((2 * l + 1) * (1 + lam) ** (-kappa) * G * (KN - KM) ** 2))


def uv_rate_check(
    R: float,
    mode: str = "Y-variance",
    N_list=(2, 4, 8, 16),
    spec: PolynomialSpec | None = None,
    kappa: float = 0.1,
) -> RateFit:
    """Decay of ``E(Y_N - Y_2N)^2`` (``'Y-variance'``), of the strip remainder
    (``'strip'``) or of ``E||X_N - X_2N||^2_{-kappa}`` (``'X-norm'``) in ``N``."""
    spec = spec or PolynomialSpec.pure(4)
    if mode == "Y-variance":
        vals = [y_variance_exact(R, spec, N, 2 * N) for N in N_list]
    elif mode == "strip":
        vals = [strip_variance(R, spec, N) for N in N_list]
    elif mode == "X-norm":
        vals = [x_norm_distance(R, N, 2 * N, kappa) for N in N_list]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _fit(N_list, vals)


# -- tightness ---------------------------------------------------------------


@dataclass(frozen=True)
class TightnessRow:
    R: float
    estimate: float
    standard_error: float
    samples: int


def plane_moment(coeffs, R, plane: PlaneGrid, n: int, kappa: float, L_weight: float) -> np.ndarray:
    """``||(1 - Delta)^{-kappa/2} j*phi||^n_{L_n(v_L^{1/n})}`` for a coefficient batch."""
    f = pushforward_field(SpectralField(R, int(round(math.sqrt(coeffs.shape[-1]))) - 1, coeffs), plane, warn=False)
    u = bessel_potential(f.values, plane, -kappa)
    v = weight_v(plane.points, L_weight)
    return plane.integrate(v * np.abs(u) ** n)


def tightness_moments(
    R_list=(1, 2, 4),
    N: float = 2.0,
    kappa: float = 0.05,
    spec: PolynomialSpec | None = None,
    L_weight: float = 1.0,
    lanes: int = 64,
    time_span: float = 12.0,
    burn_in_time: float = 4.0,
    sample_every: float = 0.5,
    plane: PlaneGrid | None = None,
    seed: int = 0,
) -> list[TightnessRow]:
    """Langevin estimates of the weighted negative-order moment for each ``R``.

    Chains start from the free field, run ``burn_in_time``, then the
    observable is recorded every ``sample_every``. Errors come from lane
    scatter.
    """
    spec = spec or PolynomialSpec.pure(4)
    plane = plane or PlaneGrid(8.0 * L_weight, 128)
    rows = []
    for i, R in enumerate(R_list):
        L = default_band_limit(R, N)
        model = LangevinModel(R, N, L, spec)
        dt = default_dt(model.Q)
        steps = int(round(time_span / dt))
        burn = int(round(burn_in_time / dt))
        thin = max(1, int(round(sample_every / dt)))
        res = run_chain(
            model,
            IntegratorConfig(dt=dt, steps=steps, burn_in=burn, thinning=thin),
            initial="gaussian",
            lanes=lanes,
            seed=seed,
            stream=100 + i,
            keep_samples=True,
        )
        S = res.samples
        vals = plane_moment(S.reshape(-1, S.shape[-1]), R, plane, spec.degree, kappa, L_weight)
        vals = vals.reshape(S.shape[:2])
        lane_means = vals.mean(axis=0)
        rows.append(
            TightnessRow(float(R), float(lane_means.mean()), float(lane_means.std(ddof=1) / math.sqrt(lanes)), vals.size)
        )
    return rows


# -- integrability -----------------------------------------------------------


def hairer_steele(F, weights=None) -> tuple[float, float]:
    """``(int e^F dmu, exp(int F dmu^F))`` for an empirical measure.

    ``mu^F`` is ``mu`` reweighted by ``e^F``; the first value never exceeds the
    second.
    """
    F = np.asarray(F, dtype=float)
    w = np.ones_like(F) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    m = F.max()
    eF = np.exp(F - m)
    Z = float(w @ eF)
    with np.errstate(over="ignore"):
        lhs = float(np.exp(math.log(Z) + m))
        rhs = float(np.exp(float((w * eF) @ F) / Z))
    return lhs, rhs


@dataclass(frozen=True)
class IntegrabilityReport:
    estimate: float
    standard_error: float
    hs_lhs: float
    hs_rhs: float
    scale: float
    source_norm: float
    heavy_tail: bool
    ess: float

    @property
    def passed(self) -> bool:
        return self.estimate <= 2 + 3 * self.standard_error and self.hs_lhs <= self.hs_rhs * (1 + 1e-12)


def plane_source(R: float, L: int, profile: Callable | None = None) -> np.ndarray:
    """Harmonic coefficients of ``g_R`` with ``w_R (g_R o j_R) = f`` for a plane
    profile ``f`` (default: unit Gaussian), band-limited to ``L``."""
    profile = profile or (lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1)))
    grid = SphereGrid.for_degree(R, L, 4)
    y = grid.points
    with np.errstate(divide="ignore", invalid="ignore"):
        x = j_R_inverse(y, R)
        vals = profile(x) / weight_w(x, R)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    return grid.analyze(vals, L)


def integrability_check(
    R: float = 1.0,
    N: float = 2.0,
    L_max: int = 3,
    spec: PolynomialSpec | None = None,
    draws: int = 400_000,
    seed: int = 0,
    scale: float | None = None,
    pilot: int = 100_000,
    kappa: float = 0.05,
    L_weight: float = 1.0,
) -> IntegrabilityReport:
    """Importance-sampling estimate of ``int exp(phi(g)^n / n) d mu_{R,N}``.

    If ``scale`` is None the source is calibrated on an independent pilot
    sample: the largest scale (bisection) with Hairer--Steele bound
    ``exp(int F dmu^F) <= 2``. The reported ``source_norm`` is the plane norm
    ``||v_L^{-1/n} f||^n_{L^kappa_{n/(n-1)}}`` of the calibrated profile.
    """
    spec = spec or PolynomialSpec.pure(4)
    n = spec.degree
    model = LangevinModel(R, N, L_max, spec)
    g = plane_source(R, L_max)

    def sample(k, stream):
        X = model.gaussian_sampler(seed, stream).sample(k)
        V = model.potential(X)
        w = np.exp(-(V - V.min()))
        return X @ g, w

    if scale is None:
        u, w = sample(pilot, 7001)
        lo, hi = 0.0, 1.0
        while hairer_steele(hi**n * u**n / n, w)[1] <= 2:
            lo, hi = hi, 2 * hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if hairer_steele(mid**n * u**n / n, w)[1] <= 2:
                lo = mid
            else:
                hi = mid
        scale = 0.9 * lo
    u, w = sample(draws, 7002)
    F = (scale * u) ** n / n
    W = w / w.sum()
    eF = np.exp(F)
    est = float(W @ eF)
    # ratio estimator error
    se = float(math.sqrt(np.sum(W**2 * (eF - est) ** 2)))
    lhs, rhs = hairer_steele(F, w)
    top = np.sort(W * eF)[::-1]
    k = max(1, top.size // 100)
    heavy = bool(top[:k].sum() > 0.5 * top.sum())
    if heavy:
        warnings.warn("top 1% of exponential weights carry more than half the mass", RuntimeWarning, stacklevel=2)
    plane = PlaneGrid(8.0, 128)
    f = np.exp(-0.5 * np.sum(plane.points**2, axis=-1)) * scale
    vw = WeightSpec.v(L_weight, -1.0 / n)(plane.points)
    q = n / (n - 1)
    bf = bessel_potential(f, plane, kappa)
    src = float(plane.integrate(np.abs(vw * bf) ** q) ** (n / q))
    ess = float(1.0 / np.sum(W**2))
    return IntegrabilityReport(est, se, lhs, rhs, float(scale), src, heavy, ess)


# -- energy monitor ----------------------------------------------------------


@dataclass(frozen=True)
class EnergyMonitorReport:
    """Energy-inequality ledgers for a batch of split-mode trajectories.

    ``C`` is the single constant fitted over all trajectories, so ``holds``
    reduces to finiteness of the ledger ratios; ``control_tripped`` is True
    when that ``C`` fails once the remainder is scaled by ``control_scale``.
    ``holdout_C`` is fitted on the first ``fit_count`` trajectories times
    ``safety`` and ``holdout_fraction`` is the share of steps of the other
    trajectories it bounds (observational).
    """

    ledgers: list
    C: float
    holds: bool
    control_tripped: bool
    holdout_C: float
    holdout_fraction: float


def energy_monitor(
    R: float = 8.0,
    N: float = 2.0,
    L_max: int | None = None,
    spec: PolynomialSpec | None = None,
    L_weight: float | None = None,
    trajectories: int = 10,
    fit_count: int = 5,
    safety: float = 2.0,
    time_span: float = 0.5,
    sample_every: int = 10,
    plane: PlaneGrid | None = None,
    kappa: float = 0.05,
    control_scale: float = 1e3,
    seed: int = 0,
) -> EnergyMonitorReport:
    """Run split-mode trajectories from ``(Z, Psi) = (X, 0)`` with ``X ~ nu``
    and evaluate the energy inequality on their plane pushforwards."""
    spec = spec or PolynomialSpec.pure(4)
    L_max = L_max or default_band_limit(R, N)
    L_weight = L_weight or R
    plane = plane or PlaneGrid(4.0 * L_weight, 512)
    model = LangevinModel(R, N, L_max, spec)
    dt = default_dt(model.Q)
    steps = int(round(time_span / dt))
    ledgers, controls = [], []
    for k in range(trajectories):
        X = model.gaussian_sampler(seed, 500 + k).sample(1, index=1)
        start = LangevinState(0.0, "split", (X, np.zeros_like(X)), 0, seed, 500 + k)
        res = run_chain(
            model,
            IntegratorConfig(dt=dt, steps=steps, burn_in=0, thinning=sample_every),
            initial=start,
            lanes=1,
            seed=seed,
            stream=500 + k,
            mode="split",
        )
        Z, P = res.split_samples
        both = np.concatenate([Z[:, 0], P[:, 0]])
        f = pushforward_field(SpectralField(R, L_max, both), plane).values
        zt, pt = f[: len(Z)], f[len(Z) :]
        ledgers.append(energy_report(pt, zt, res.times, model.c, spec, L_weight, plane, kappa))
        controls.append(energy_report(control_scale * pt, zt, res.times, model.c, spec, L_weight, plane, kappa))
    C = max(lg.fitted_C() for lg in ledgers)
    ok = all(np.all(np.isfinite(lg.ratio)) and np.all(lg.rhs > 0) for lg in ledgers)
    holds = bool(ok and all(lg.holds(C) for lg in ledgers))
    tripped = not all(lg.holds(C) for lg in controls)
    hC = safety * max(lg.fitted_C() for lg in ledgers[:fit_count])
    rest = ledgers[fit_count:]
    frac = float(np.mean(np.concatenate([lg.lhs <= hC * lg.rhs for lg in rest]))) if rest else math.nan
    return EnergyMonitorReport(ledgers, C, holds, tripped, hC, frac)


# -- free stationarity -------------------------------------------------------


@dataclass(frozen=True)
class StationarityReport:
    """Per-mode comparison of chain samples with the free covariance."""

    variance_z: np.ndarray
    ks_pvalues: np.ndarray

    @property
    def variance_ok(self) -> bool:
        return bool(np.all(np.abs(self.variance_z) <= 4))

    @property
    def ks_fraction(self) -> float:
        return float(np.mean(self.ks_pvalues > 1e-3))

    @property
    def passed(self) -> bool:
        return self.variance_ok and self.ks_fraction >= 0.95


def stationarity_check(samples, covariance: ZonalMultiplier) -> StationarityReport:
    """Compare samples of shape ``(T, lanes, n_coeffs)`` with ``N(0, C_l)`` per mode.

    Variance errors come from lane-to-lane scatter; the KS test pools all
    samples of a mode after standardization.
    """
    from scipy import stats

    S = np.asarray(samples, dtype=float)
    T, lanes, nc = S.shape
    C = covariance.expanded()
    lane_var = np.mean(S * S, axis=0)
    est = lane_var.mean(axis=0)
    se = lane_var.std(axis=0, ddof=1) / math.sqrt(lanes)
    z = (est - C) / se
    U = (S / np.sqrt(C)).reshape(-1, nc)
    p = np.array([stats.kstest(U[:, i], "norm").pvalue for i in range(nc)])
    return StationarityReport(z, p)


SYMMETRY_CAPS = (Cap((0.3, 0.8, 0.5), 0.6), Cap((-0.5, 0.2, 0.8), 0.5))


def two_point_pairs(R: float, L: int, rotations: dict) -> list:
    """Catalog observable pairs for :func:`symmetry_check`: for every named
    rotation, ``phi(a) phi(b)`` and ``phi(a)^4`` against their rotated forms."""
    a, b = SYMMETRY_CAPS

    def two(c1, c2):
        f1, f2 = c1.coeffs(R, L), c2.coeffs(R, L)
        return lambda S: (S @ f1) * (S @ f2)

    def four(c1):
        f1 = c1.coeffs(R, L)
        return lambda S: (S @ f1) ** 4

    pairs = []
    for name, rot in rotations.items():
        pairs.append((f"two_point_{name}", two(a, b), two(a.rotated(rot), b.rotated(rot))))
        pairs.append((f"fourth_moment_{name}", four(a), four(a.rotated(rot))))
    return pairs


def tightness_band(rows: Sequence[TightnessRow]) -> float:
    """``(max - min) / mean`` of the estimates."""
    est = np.array([r.estimate for r in rows])
    return float((est.max() - est.min()) / est.mean())
