"""Wick calculus: Wick powers, the Wick-ordered polynomial ``P(tau, c)``,
interaction functionals on the sphere and Monte Carlo sanity checks of the
Gaussian chaos identities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .sphere import SphereGrid, SpectralField
from .streams import stream_rng

__all__ = [
    "MAX_DEGREE",
    "wick_power",
    "PolynomialSpec",
    "wick_polynomial",
    "wick_derivative",
    "remainder_coeffs",
    "remainder_rhs",
    "LowerBoundFit",
    "lower_bound_fit",
    "WickContext",
    "SourceCheck",
    "interaction_grid",
    "interaction_Y",
    "interaction_values",
    "ChaosReport",
    "wick_orthogonality_check",
    "nelson_moment_check",
]

MAX_DEGREE = 16
_FACT = [math.factorial(k) for k in range(MAX_DEGREE + 1)]


def _wick_table(m: int) -> list[tuple[int, int]]:
    """Integer pairs ``(k, coef)`` with ``x^{:m:} = sum_k coef c^k x^{m-2k}``."""
    if m < 0:
        raise ValueError("Wick degree must be non-negative")
    if m > MAX_DEGREE:
        raise ValueError(f"Wick degree {m} exceeds supported maximum {MAX_DEGREE}")
    return [
        (k, (-1) ** k * _FACT[m] // (_FACT[m - 2 * k] * _FACT[k] * 2**k))
        for k in range(m // 2 + 1)
    ]


def wick_power(x, m: int, c: float) -> np.ndarray:
    """Wick power ``x^{:m:}`` relative to variance ``c``.

    Equal to ``c^{m/2} He_m(x / sqrt(c))`` for ``c > 0`` and to ``x^m`` for
    ``c = 0``.

    Examples
    --------
    >>> float(wick_power(2.0, 2, 1.0))
    3.0
    """
    if c < 0:
        raise ValueError("variance c must be non-negative")
    x = np.asarray(x, dtype=float)
    table = _wick_table(m)
    # Horner in x^2, highest power first
    x2 = x * x
    out = np.full_like(x, float(table[0][1]))
    for k, coef in table[1:]:
        out = out * x2 + coef * c**k
    return out * x if m % 2 else out


@dataclass(frozen=True)
class PolynomialSpec:
    """Even polynomial ``P(tau) = sum_m a_m tau^m`` with ``a_n = 1/n``.

    Parameters
    ----------
    coeffs : sequence of float
        ``a_0, ..., a_n``; the degree ``n`` is ``len(coeffs) - 1``.
    coupling : float
        Overall coupling multiplying the interaction.
    """

    coeffs: tuple[float, ...]
    coupling: float = 1.0

    def __post_init__(self):
        a = tuple(float(v) for v in self.coeffs)
        object.__setattr__(self, "coeffs", a)
        n = len(a) - 1
        if n < 4 or n % 2:
            raise ValueError(f"degree must be even and at least 4, got {n}")
        if n > MAX_DEGREE:
            raise ValueError(f"degree {n} exceeds supported maximum {MAX_DEGREE}")
        if a[-1] != 1.0 / n:
            raise ValueError(f"leading coefficient must be exactly 1/{n}")
        if not self.coupling > 0:
            raise ValueError("coupling must be positive")
        if not all(math.isfinite(v) for v in a):
            raise ValueError("coefficients must be finite")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def pure(cls, n: int, coupling: float = 1.0) -> "PolynomialSpec":
        """``tau^n / n``."""
        return cls(tuple([0.0] * n + [1.0 / n]), coupling)

    @classmethod
    def with_lower(cls, n: int, lower: dict[int, float], coupling: float = 1.0):
        """``tau^n / n`` plus ``sum lower[m] tau^m`` for ``m < n``."""
        a = [0.0] * n + [1.0 / n]
        for m, v in lower.items():
            if not 0 <= m < n:
                raise ValueError("lower-order degrees must be in [0, n)")
            a[m] = float(v)
        return cls(tuple(a), coupling)


def wick_polynomial(tau, spec: PolynomialSpec, c: float) -> np.ndarray:
    """``P(tau, c) = sum_m a_m tau^{:m:}`` (no coupling factor)."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    for m, a in enumerate(spec.coeffs):
        if a != 0.0:
            out = out + a * wick_power(tau, m, c)
    return out


def wick_derivative(tau, spec: PolynomialSpec, c: float) -> np.ndarray:
    """``d/dtau P(tau, c) = sum_m m a_m tau^{:m-1:}``."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    for m, a in enumerate(spec.coeffs):
        if m and a != 0.0:
            out = out + m * a * wick_power(tau, m - 1, c)
    return out


def remainder_coeffs(spec: PolynomialSpec) -> dict[tuple[int, int], float]:
    """Coefficients ``a_{m,l} = -a_{m+1} (m+1)! / ((m-l)! l!)``.

    Keys are ``(m, l)`` with ``0 <= l <= n-2`` and ``l <= m <= n-1``. With
    these, ``P'(psi + z, c) = psi^{n-1} - sum a_{m,l} z^{:m-l:} psi^l``.
    """
    n = spec.degree
    a = spec.coeffs
    out = {}
    for l in range(n - 1):
        for m in range(l, n):
            out[(m, l)] = -a[m + 1] * _FACT[m + 1] / (_FACT[m - l] * _FACT[l])
    return out


def remainder_rhs(psi, z_wick: list, spec: PolynomialSpec) -> np.ndarray:
    """``sum_{m,l} a_{m,l} z^{:m-l:} psi^l`` given ``z_wick[k] = z^{:k:}``."""
    psi = np.asarray(psi, dtype=float)
    out = np.zeros(np.broadcast_shapes(psi.shape, np.shape(z_wick[0])))
    powers = [np.ones_like(psi)]
    for _ in range(spec.degree - 2):
        powers.append(powers[-1] * psi)
    for (m, l), coef in remainder_coeffs(spec).items():
        if coef != 0.0:
            out = out + coef * z_wick[m - l] * powers[l]
    return out


# -- lower bound -------------------------------------------------------------


@dataclass(frozen=True)
class LowerBoundFit:
    """Grid-verified constant ``A`` with ``P(tau,c) >= tau^n/2n - A c^{n/2}``.

    ``A`` comes from the base grid and ``A_refined`` from the grid refined
    twice in each direction. This is a numerical certificate on the sampled
    window, not a proof.
    """

    A: float
    A_refined: float
    tau_range: tuple[float, float]
    c_range: tuple[float, float]

    @property
    def relative_change(self) -> float:
        if self.A_refined == 0.0:
            return 0.0 if self.A == 0.0 else math.inf
        return abs(self.A_refined - self.A) / abs(self.A_refined)


def _lb_max(spec, taus, cs) -> float:
    n = spec.degree
    best = -np.inf
    for c in cs:
        v = (taus**n / (2 * n) - wick_polynomial(taus, spec, c)) / c ** (n / 2)
        best = max(best, float(v.max()))
    return max(best, 0.0)


def lower_bound_fit(
    spec: PolynomialSpec,
    tau_range: tuple[float, float] | None = None,
    c_range: tuple[float, float] = (1.0, 64.0),
    n_tau: int = 4001,
    n_c: int = 129,
) -> LowerBoundFit:
    """Smallest ``A`` on a ``(tau, c)`` grid such that the Wick-ordered polynomial
    dominates ``tau^n/2n - A c^{n/2}``; ``c`` is sampled log-uniformly.
    """
    c_lo, c_hi = c_range
    if not (1.0 <= c_lo < c_hi):
        raise ValueError("c_range must satisfy 1 <= c_min < c_max")
    if tau_range is None:
        s = 8.0 * math.sqrt(c_hi)
        tau_range = (-s, s)

    def grid(k):
        taus = np.linspace(tau_range[0], tau_range[1], (n_tau - 1) * k + 1)
        cs = np.exp(np.linspace(math.log(c_lo), math.log(c_hi), (n_c - 1) * k + 1))
        return taus, cs

    A = _lb_max(spec, *grid(1))
    A2 = _lb_max(spec, *grid(2))
    return LowerBoundFit(A, A2, tuple(tau_range), (c_lo, c_hi))


# -- interaction functionals -------------------------------------------------


@dataclass(frozen=True)
class SourceCheck:
    norm_g: float
    norm_lap_g: float
    ok: bool


@dataclass(frozen=True, eq=False)
class WickContext:
    """Counterterm ``c`` together with an optional source field ``g``."""

    c: float
    g: SpectralField | None = None

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("counterterm must be non-negative")

    def check_source(self, n: int, grid: SphereGrid | None = None, strict=False):
        """Check ``||g||^n_{L_q} <= 1/2`` and ``||Delta g||^n_{L_q} <= 1/2``,
        ``q = n/(n-1)``, by quadrature. Warns (or raises if ``strict``)."""
        if self.g is None:
            return SourceCheck(0.0, 0.0, True)
        g = self.g
        if grid is None:
            grid = SphereGrid.for_degree(g.R, g.L_max, 2 * n)
        q = n / (n - 1)
        lam = np.repeat(
            np.arange(g.L_max + 1) * (np.arange(g.L_max + 1) + 1) / g.R**2,
            2 * np.arange(g.L_max + 1) + 1,
        )
        vals = grid.synthesize(g.coeffs, g.L_max)
        lap = grid.synthesize(-lam * g.coeffs, g.L_max)
        ng = float(grid.integrate(np.abs(vals) ** q) ** (1 / q)) ** n
        nl = float(grid.integrate(np.abs(lap) ** q) ** (1 / q)) ** n
        ok = ng <= 0.5 and nl <= 0.5
        if not ok:
            msg = f"source outside smallness regime: {ng:.3g}, {nl:.3g} (limit 0.5)"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return SourceCheck(ng, nl, ok)


def interaction_grid(R: float, L_max: int, n: int) -> SphereGrid:
    """Dealiased grid for degree-``n`` pointwise products."""
    return SphereGrid.for_degree(R, L_max, n)


def interaction_values(values, spec: PolynomialSpec, c: float) -> np.ndarray:
    """Pointwise ``lambda P(x, c)``."""
    return spec.coupling * wick_polynomial(values, spec, c)


def _region_weights(grid: SphereGrid, region: str, N: float | None) -> np.ndarray:
    if region == "all":
        return grid.weights
    if N is None:
        raise ValueError("region restriction needs the cutoff N")
    if region in ("+", "plus"):
        return grid.weights * grid.region_mask(+1, 1.0 / N)
    if region in ("-", "minus"):
        return grid.weights * grid.region_mask(-1, 1.0 / N)
    if region == "strip":
        return grid.weights * (np.abs(grid.points[:, 0]) <= 1.0 / N)
    raise ValueError(f"unknown region {region!r}")


def interaction_Y(
    X,
    spec: PolynomialSpec,
    c: float,
    region: str = "all",
    ctx: WickContext | None = None,
    grid: SphereGrid | None = None,
    N: float | None = None,
):
    """Interaction ``lambda sum_m a_m int_region X^{:m:} rho_R`` minus ``X(g)^n / n``.

    Parameters
    ----------
    X : SpectralField or ndarray
        A field or a batch of coefficient arrays (leading axes are batch axes).
        Raw arrays need ``grid``.
    region : {"all", "+", "-", "strip"}
        Whole sphere, ``{+-x1 > 1/N}`` as node masks, or the closed strip
        ``{|x1| <= 1/N}``.
    grid : SphereGrid, optional
        Must integrate degree-``n`` products exactly.

    Returns
    -------
    float or ndarray
    """
    n = spec.degree
    if isinstance(X, SpectralField):
        coeffs, R, L = X.coeffs, X.R, X.L_max
        if grid is None:
            grid = interaction_grid(R, L, n)
    else:
        if grid is None:
            raise ValueError("grid required for raw coefficient arrays")
        coeffs = np.asarray(X, dtype=float)
        L = int(round(math.sqrt(coeffs.shape[-1]))) - 1
    if grid.exact_degree < n * L:
        raise ValueError(
            f"grid integrates degree {grid.exact_degree} exactly, need {n * L}"
        )
    vals = grid.synthesize(coeffs, L)
    w = _region_weights(grid, region, N)
    Y = interaction_values(vals, spec, c) @ w
    if ctx is not None and ctx.g is not None:
        if ctx.g.L_max != L:
            raise ValueError("source band limit differs from field band limit")
        Y = Y - (coeffs @ ctx.g.coeffs) ** n / n
    return float(Y) if np.ndim(Y) == 0 else Y


# -- Monte Carlo chaos checks ------------------------------------------------


@dataclass(frozen=True)
class ChaosReport:
    estimate: float
    standard_error: float
    target: float
    flagged: bool
    detail: dict = field(default_factory=dict)

    @property
    def z(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.estimate == self.target else math.inf
        return (self.estimate - self.target) / self.standard_error


def wick_orthogonality_check(
    rho: float,
    n: int,
    m: int,
    draws: int = 1_000_000,
    seed: int = 0,
    stream: int = 0,
    nsigma: float = 5.0,
) -> ChaosReport:
    """Monte Carlo check of ``E He_n(X) He_m(Y) = delta_nm n! rho^n`` for a
    standard Gaussian pair with correlation ``rho``."""
    if abs(rho) > 1:
        raise ValueError("|rho| must not exceed 1")
    rng = stream_rng(seed, stream)
    chunk = 250_000
    s1 = s2 = 0.0
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        u = rng.standard_normal((2, k))
        x = u[0]
        y = rho * u[0] + math.sqrt(1 - rho * rho) * u[1]
        prod = wick_power(x, n, 1.0) * wick_power(y, m, 1.0)
        s1 += math.fsum(prod)
        s2 += math.fsum(prod * prod)
        done += k
    mean = s1 / draws
    var = max(s2 / draws - mean * mean, 0.0)
    se = math.sqrt(var / draws)
    target = float(_FACT[n] * rho**n) if n == m else 0.0
    flagged = abs(mean - target) > nsigma * se + 1e-15
    return ChaosReport(mean, se, target, flagged, {"rho": rho, "n": n, "m": m})


def nelson_moment_check(
    n: int,
    p: float,
    draws: int = 1_000_000,
    seed: int = 0,
    stream: int = 0,
    inflate: float = 1.0,
    nsigma: float = 3.0,
) -> ChaosReport:
    """Hypercontractivity check ``||He_n(X)||_p <= sqrt(n) (p-1)^{n/2} ||He_n(X)||_2``.

    ``estimate`` is the empirical ratio of the two sides (the left side
    multiplied by ``inflate``, a negative-control knob) and ``target`` is 1.
    Flagged when the ratio exceeds 1 by more than ``nsigma`` standard errors.
    """
    if not 2 <= p <= 8:
        raise ValueError("p must lie in [2, 8]")
    rng = stream_rng(seed, stream)
    y = wick_power(rng.standard_normal(draws), n, 1.0)
    a = np.abs(y)
    mp = float(np.mean(a**p))
    se_mp = float(np.std(a**p) / math.sqrt(draws))
    m2 = float(np.mean(y * y))
    se_m2 = float(np.std(y * y) / math.sqrt(draws))
    norm_p = inflate * mp ** (1 / p)
    norm_2 = math.sqrt(m2)
    const = math.sqrt(n) * (p - 1) ** (n / 2)
    ratio = norm_p / (const * norm_2)
    # delta method, treating the two moments as independent (conservative)
    rel = math.hypot(se_mp / (p * mp), se_m2 / (2 * m2))
    se = ratio * rel
    flagged = ratio > 1.0 + nsigma * se
    return ChaosReport(
        ratio, se, 1.0, flagged, {"n": n, "p": p, "norm_p": norm_p, "norm_2": norm_2}
    )
