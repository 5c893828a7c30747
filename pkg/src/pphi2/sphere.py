"""Real spherical harmonics, Gauss--Legendre grids and zonal multipliers on the
round sphere of radius ``R``.

Conventions
-----------
Coefficients are stored flat with index ``l*l + l + m`` for ``0 <= l <= L_max``
and ``-l <= m <= l``. The basis is orthonormal in ``L2(S_R, rho_R)`` where
``rho_R`` is the surface measure of total mass ``4 pi R^2``::

    Y_l0   = P~_l^0(cos t) / R
    Y_lm   = sqrt(2) P~_l^m(cos t) cos(m p) / R      (m > 0)
    Y_l,-m = sqrt(2) P~_l^m(cos t) sin(m p) / R      (m > 0)

with ``P~`` the unit-sphere normalized associated Legendre functions (no
Condon--Shortley phase). Points are ``x = R (sin t cos p, sin t sin p, cos t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "n_coeffs",
    "lm_index",
    "degree_of_index",
    "order_of_index",
    "laplacian_eigenvalue",
    "normalized_legendre",
    "real_sph_harm",
    "SphereGrid",
    "SpectralField",
    "GridField",
    "ZonalMultiplier",
    "build_multiplier",
    "apply_multiplier",
    "analyze",
    "synthesize",
    "inner_product",
    "geodesic_distance",
    "evaluate",
    "reflect_coeffs",
    "default_band_limit",
]

# dense transform matrices are used below this many entries
_DENSE_LIMIT = 2_000_000


def n_coeffs(L_max: int) -> int:
    """Number of real coefficients for band limit ``L_max``."""
    return (L_max + 1) ** 2


def lm_index(l: int, m: int) -> int:
    """Flat position of the ``(l, m)`` coefficient."""
    if abs(m) > l:
        raise ValueError(f"|m| must not exceed l, got l={l}, m={m}")
    return l * l + l + m


def degree_of_index(L_max: int) -> np.ndarray:
    """Degree ``l`` of every flat coefficient slot."""
    return np.repeat(np.arange(L_max + 1), 2 * np.arange(L_max + 1) + 1)


def order_of_index(L_max: int) -> np.ndarray:
    """Order ``m`` of every flat coefficient slot."""
    return np.concatenate([np.arange(-l, l + 1) for l in range(L_max + 1)])


def default_band_limit(R: float, N: float) -> int:
    """Default band limit ``ceil(4 N R)`` used for cutoff ``N`` at radius ``R``."""
    return int(math.ceil(4.0 * N * R - 1e-12))


def laplacian_eigenvalue(l, R: float):
    """Eigenvalue ``l(l+1)/R^2`` of ``-Delta_R`` on degree-``l`` harmonics.

    Examples
    --------
    >>> laplacian_eigenvalue(7, 2.0)
    14.0
    """
    if R <= 0:
        raise ValueError("R must be positive")
    l_arr = np.asarray(l)
    if np.any(l_arr < 0):
        raise ValueError("degree must be non-negative")
    out = l_arr * (l_arr + 1) / R**2
    return float(out) if out.ndim == 0 else out


def _half_index(l: int, m: int) -> int:
    return l * (l + 1) // 2 + m


def _legendre_rows(L_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized Legendre values with the degree/order index first."""
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.empty(((L_max + 1) * (L_max + 2) // 2,) + x.shape)
    pmm = np.full(x.shape, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(L_max + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        out[_half_index(m, m)] = pmm
        if m == L_max:
            break
        p_prev, p_cur = pmm, math.sqrt(2 * m + 3) * x * pmm
        out[_half_index(m + 1, m)] = p_cur
        a_prev = math.sqrt(2 * m + 3)
        for l in range(m + 2, L_max + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            p_prev, p_cur = p_cur, a * (x * p_cur - p_prev / a_prev)
            a_prev = a
            out[_half_index(l, m)] = p_cur
    return out


def normalized_legendre(L_max: int, x) -> np.ndarray:
    """Normalized associated Legendre functions ``P~_l^m(x)`` for ``0<=m<=l<=L_max``.

    Parameters
    ----------
    L_max : int
        Highest degree.
    x : array_like
        Values of ``cos(theta)`` in ``[-1, 1]``.

    Returns
    -------
    ndarray, shape ``x.shape + ((L_max+1)(L_max+2)/2,)``
        Entry ``l(l+1)/2 + m`` holds ``P~_l^m``, normalized so that
        ``2 pi int_{-1}^{1} P~_l^m(x)^2 dx = 1`` (or 1/2 for ``m > 0``
        before the ``sqrt(2)`` real-basis factor).
    """
    x = np.asarray(x, dtype=float)
    return np.moveaxis(_legendre_rows(L_max, x), 0, -1)


def _sph_rows(L_max: int, cos_theta: np.ndarray, phi: np.ndarray, R: float) -> np.ndarray:
    """Real harmonics with the coefficient index first, shape ``(n_coeffs, n)``."""
    P = _legendre_rows(L_max, cos_theta)
    out = np.empty((n_coeffs(L_max),) + cos_theta.shape)
    root2 = math.sqrt(2.0) / R
    for l in range(L_max + 1):
        out[lm_index(l, 0)] = P[_half_index(l, 0)] / R
    for m in range(1, L_max + 1):
        cm = root2 * np.cos(m * phi)
        sm = root2 * np.sin(m * phi)
        for l in range(m, L_max + 1):
            p = P[_half_index(l, m)]
            np.multiply(p, cm, out=out[lm_index(l, m)])
            np.multiply(p, sm, out=out[lm_index(l, -m)])
    return out


def real_sph_harm(L_max: int, cos_theta, phi, R: float = 1.0) -> np.ndarray:
    """Real orthonormal harmonics on ``S_R`` at the given angles.

    Returns an array of shape ``cos_theta.shape + (n_coeffs(L_max),)``.
    """
    cos_theta = np.asarray(cos_theta, dtype=float)
    shape = cos_theta.shape
    phi = np.broadcast_to(np.asarray(phi, dtype=float), shape)
    rows = _sph_rows(L_max, cos_theta.ravel(), phi.ravel(), R)
    return np.moveaxis(rows.reshape((-1,) + shape), 0, -1)


def _angles(points, R: float):
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=-1)
    cos_t = np.clip(pts[..., 2] / np.where(r > 0, r, 1.0), -1.0, 1.0)
    phi = np.arctan2(pts[..., 1], pts[..., 0])
    return cos_t, phi


def evaluate(coeffs, points, R: float) -> np.ndarray:
    """Evaluate a band-limited field at arbitrary points of ``S_R``.

    ``coeffs`` may carry leading batch axes; ``points`` has shape ``(..., 3)``
    and only its direction is used. Returns ``coeffs.shape[:-1] + points.shape[:-1]``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    L_max = int(round(math.sqrt(coeffs.shape[-1]))) - 1
    if n_coeffs(L_max) != coeffs.shape[-1]:
        raise ValueError("coefficient length is not a perfect square")
    cos_t, phi = _angles(points, R)
    Y = _sph_rows(L_max, cos_t.ravel(), phi.ravel(), R)
    vals = coeffs @ Y
    return vals.reshape(coeffs.shape[:-1] + cos_t.shape)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss--Legendre x equispaced-longitude quadrature grid on ``S_R``.

    Parameters
    ----------
    R : float
        Radius.
    L_max : int
        Band limit of fields synthesized on / analyzed from the grid.
    n_lat, n_lon : int, optional
        Node counts. Defaults are the smallest values satisfying
        ``n_lat >= L_max + 1`` and ``n_lon >= 2 L_max + 1`` with ``n_lon`` even.

    Notes
    -----
    Nodes are ordered latitude-major, so ``values.reshape(n_lat, n_lon)``
    recovers the tensor layout. Products of fields with total degree up to
    ``min(2 n_lat - 1, n_lon - 1)`` are integrated exactly.
    """

    R: float
    L_max: int
    n_lat: int = 0
    n_lon: int = 0

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.L_max < 0:
            raise ValueError("L_max must be non-negative")
        n_lat = self.n_lat or self.L_max + 1
        n_lon = self.n_lon or 2 * self.L_max + 2
        if n_lat < self.L_max + 1:
            raise ValueError(f"n_lat={n_lat} < L_max+1={self.L_max + 1}")
        if n_lon < 2 * self.L_max + 1:
            raise ValueError(f"n_lon={n_lon} < 2 L_max+1={2 * self.L_max + 1}")
        if n_lon % 2:
            raise ValueError("n_lon must be even for reflection symmetry")
        object.__setattr__(self, "n_lat", int(n_lat))
        object.__setattr__(self, "n_lon", int(n_lon))

    @classmethod
    def for_degree(cls, R: float, L_max: int, degree: int) -> "SphereGrid":
        """Grid integrating products of ``degree`` band-limited factors exactly."""
        n_lat = max(L_max + 1, math.ceil(degree * L_max / 2) + 1)
        n_lon = max(2 * L_max + 1, degree * L_max + 1)
        n_lon += n_lon % 2
        return cls(R, L_max, n_lat, n_lon)

    @property
    def exact_degree(self) -> int:
        """Highest total polynomial degree integrated exactly."""
        return min(2 * self.n_lat - 1, self.n_lon - 1)

    @property
    def size(self) -> int:
        return self.n_lat * self.n_lon

    @cached_property
    def _gl(self):
        x, w = np.polynomial.legendre.leggauss(self.n_lat)
        return x, w

    @property
    def cos_theta(self) -> np.ndarray:
        return self._gl[0]

    @cached_property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_lon) / self.n_lon

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights per node, summing to ``4 pi R^2``."""
        w = self._gl[1] * (2.0 * np.pi / self.n_lon) * self.R**2
        return np.repeat(w, self.n_lon)

    @cached_property
    def points(self) -> np.ndarray:
        """Cartesian node coordinates, shape ``(size, 3)``."""
        ct = np.repeat(self.cos_theta, self.n_lon)
        st = np.sqrt(1.0 - ct**2)
        ph = np.tile(self.phi, self.n_lat)
        return self.R * np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)

    @cached_property
    def reflection_permutation(self) -> np.ndarray:
        """Node permutation realizing ``x1 -> -x1`` (``phi -> pi - phi``)."""
        j = np.arange(self.n_lon)
        jr = (self.n_lon // 2 - j) % self.n_lon
        return (np.arange(self.n_lat)[:, None] * self.n_lon + jr[None, :]).ravel()

    @cached_property
    def _plm(self):
        return normalized_legendre(self.L_max, self.cos_theta)

    @cached_property
    def _dense(self):
        if self.size * n_coeffs(self.L_max) > _DENSE_LIMIT:
            return None
        ct = np.repeat(self.cos_theta, self.n_lon)
        ph = np.tile(self.phi, self.n_lat)
        return real_sph_harm(self.L_max, ct, ph, self.R)

    @cached_property
    def _blocks(self):
        # per order m: (degrees, cos slots, sin slots, P table n_lat x n_l)
        L = self.L_max
        blocks = []
        for m in range(L + 1):
            ls = np.arange(m, L + 1)
            cos_idx = ls * ls + ls + m
            sin_idx = ls * ls + ls - m
            P = self._plm[:, ls * (ls + 1) // 2 + m]
            if m > 0:
                P = P * math.sqrt(2.0)
            blocks.append((cos_idx, sin_idx, P))
        return blocks

    def synthesize(self, coeffs, L_max: int | None = None) -> np.ndarray:
        """Node values of band-limited fields; leading axes are batch axes."""
        coeffs = np.asarray(coeffs, dtype=float)
        L = self.L_max if L_max is None else L_max
        if coeffs.shape[-1] != n_coeffs(L):
            raise ValueError(
                f"expected {n_coeffs(L)} coefficients, got {coeffs.shape[-1]}"
            )
        if L > self.L_max:
            raise ValueError("field band limit exceeds grid band limit")
        if L < self.L_max:
            pad = np.zeros(coeffs.shape[:-1] + (n_coeffs(self.L_max),))
            pad[..., : coeffs.shape[-1]] = coeffs
            coeffs = pad
        if self._dense is not None:
            return coeffs @ self._dense.T
        batch = coeffs.shape[:-1]
        X = np.zeros(batch + (self.n_lat, self.n_lon // 2 + 1), dtype=complex)
        for m, (ci, si, P) in enumerate(self._blocks):
            A = coeffs[..., ci] @ P.T
            if m == 0:
                X[..., 0] = self.n_lon * A
            else:
                B = coeffs[..., si] @ P.T
                X[..., m] = 0.5 * self.n_lon * (A - 1j * B)
        vals = np.fft.irfft(X, n=self.n_lon, axis=-1) / self.R
        return vals.reshape(batch + (self.size,))

    def analyze(self, values, L_max: int | None = None) -> np.ndarray:
        """Spectral coefficients by quadrature; inverse of :meth:`synthesize`."""
        values = np.asarray(values, dtype=float)
        L = self.L_max if L_max is None else L_max
        if values.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} node values, got {values.shape[-1]}")
        if L > self.L_max:
            raise ValueError("requested band limit exceeds grid band limit")
        if self._dense is not None:
            out = (values * self.weights) @ self._dense
            return out[..., : n_coeffs(L)]
        batch = values.shape[:-1]
        F = np.fft.rfft(values.reshape(batch + (self.n_lat, self.n_lon)), axis=-1)
        F = F * (self._gl[1] * (2.0 * np.pi / self.n_lon) * self.R)[:, None]
        out = np.zeros(batch + (n_coeffs(self.L_max),))
        for m, (ci, si, P) in enumerate(self._blocks):
            out[..., ci] = F[..., m].real @ P
            if m > 0:
                out[..., si] = -F[..., m].imag @ P
        return out[..., : n_coeffs(L)]

    def integrate(self, values) -> np.ndarray:
        """Quadrature of node values against ``rho_R``."""
        return np.asarray(values) @ self.weights

    def region_mask(self, sign: int, margin: float) -> np.ndarray:
        """Nodes with ``sign * x1 > margin`` (open condition)."""
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return sign * self.points[:, 0] > margin


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Band-limited real field on ``S_R`` given by its harmonic coefficients."""

    R: float
    L_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = _readonly(self.coeffs)
        if c.shape[-1] != n_coeffs(self.L_max):
            raise ValueError(
                f"coefficient length {c.shape[-1]} does not match L_max={self.L_max}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, R: float, L_max: int) -> "SpectralField":
        return cls(R, L_max, np.zeros(n_coeffs(L_max)))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return SpectralField(self.R, self.L_max, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return SpectralField(self.R, self.L_max, self.coeffs - other.coeffs)

    def scaled(self, a: float) -> "SpectralField":
        return SpectralField(self.R, self.L_max, a * self.coeffs)

    def pair(self, other: "SpectralField") -> float:
        """``int phi f rho_R`` by Parseval."""
        _check_compatible(self, other)
        return float(self.coeffs @ other.coeffs)

    def __call__(self, points) -> np.ndarray:
        return evaluate(self.coeffs, points, self.R)


def _check_compatible(a: SpectralField, b: SpectralField):
    if a.L_max != b.L_max or not math.isclose(a.R, b.R):
        raise ValueError("fields live on different spaces")


@dataclass(frozen=True, eq=False)
class GridField:
    """Node values of a field on a :class:`SphereGrid`."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape[-1] != self.grid.size:
            raise ValueError(
                f"values length {v.shape[-1]} != n_lat*n_lon = {self.grid.size}"
            )
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class ZonalMultiplier:
    """Operator acting on degree ``l`` by the scalar ``values[l]``."""

    values: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1:
            raise ValueError("multiplier values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("multiplier values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def L_max(self) -> int:
        return len(self.values) - 1

    def expanded(self) -> np.ndarray:
        """Per-coefficient factors in flat layout."""
        return np.repeat(self.values, 2 * np.arange(len(self.values)) + 1)

    def __mul__(self, other: "ZonalMultiplier") -> "ZonalMultiplier":
        if len(self.values) != len(other.values):
            raise ValueError("multiplier length mismatch")
        return ZonalMultiplier(self.values * other.values)

    def truncated(self, L_max: int) -> "ZonalMultiplier":
        if L_max > self.L_max:
            raise ValueError("cannot extend a multiplier")
        return ZonalMultiplier(self.values[: L_max + 1], self.kind)


_KIND_ALIASES = {
    "G": "G_R",
    "G_R": "G_R",
    "K": "K_RN",
    "K_RN": "K_RN",
    "K_{R,N}": "K_RN",
    "G_RN": "G_RN",
    "G_{R,N}": "G_RN",
    "Q": "Q_RN",
    "Q_RN": "Q_RN",
    "Q_{R,N}": "Q_RN",
}


def build_multiplier(kind: str, R: float, N: float, L_max: int) -> ZonalMultiplier:
    """Standard zonal multipliers.

    Parameters
    ----------
    kind : {"G_R", "K_RN", "G_RN", "Q_RN"}
        ``G_R = (1 - Delta)^-1``, ``K_RN = (1 - Delta/N^2)^-1``,
        ``G_RN = K G K`` and ``Q_RN = G_RN^-1``.
    R, N : float
        Radius and UV cutoff. ``N`` is ignored for ``G_R`` but still validated.
    L_max : int
        Highest degree.
    """
    key = _KIND_ALIASES.get(kind)
    if key is None:
        raise ValueError(f"unknown multiplier kind {kind!r}")
    if N <= 0:
        raise ValueError("N must be positive")
    lam = laplacian_eigenvalue(np.arange(L_max + 1), R)
    lam = np.atleast_1d(lam)
    if key == "G_R":
        vals = 1.0 / (1.0 + lam)
    elif key == "K_RN":
        vals = 1.0 / (1.0 + lam / N**2)
    elif key == "G_RN":
        vals = 1.0 / ((1.0 + lam) * (1.0 + lam / N**2) ** 2)
    else:
        vals = (1.0 + lam) * (1.0 + lam / N**2) ** 2
    return ZonalMultiplier(vals, key)


def apply_multiplier(phi: SpectralField, mu: ZonalMultiplier) -> SpectralField:
    """Multiply every degree-``l`` coefficient of ``phi`` by ``mu.values[l]``."""
    if mu.L_max != phi.L_max:
        raise ValueError(f"multiplier L_max={mu.L_max} != field L_max={phi.L_max}")
    return SpectralField(phi.R, phi.L_max, phi.coeffs * mu.expanded())


def synthesize(phi: SpectralField, grid: SphereGrid) -> GridField:
    """Node values of ``phi`` on ``grid``."""
    if not math.isclose(phi.R, grid.R):
        raise ValueError("radius mismatch")
    return GridField(grid, grid.synthesize(phi.coeffs, phi.L_max))


def analyze(f: GridField, L_max: int | None = None) -> SpectralField:
    """Harmonic coefficients of a grid field up to ``L_max`` (default: grid's)."""
    L = f.grid.L_max if L_max is None else L_max
    return SpectralField(f.grid.R, L, f.grid.analyze(f.values, L))


def inner_product(f: GridField, g: GridField) -> float:
    """Quadrature of ``f g`` against ``rho_R``."""
    if f.grid is not g.grid:
        same = (
            math.isclose(f.grid.R, g.grid.R)
            and f.grid.n_lat == g.grid.n_lat
            and f.grid.n_lon == g.grid.n_lon
        )
        if not same:
            raise ValueError("fields live on different grids")
    return float(f.grid.integrate(f.values * g.values))


def geodesic_distance(x, y, R: float, rtol: float = 1e-9):
    """Great-circle distance ``R arccos(x.y / R^2)`` between points of ``S_R``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if np.any(np.abs(np.linalg.norm(p, axis=-1) - R) > rtol * R):
            raise ValueError("point is not on the sphere of radius R")
    cosang = np.clip(np.sum(x * y, axis=-1) / R**2, -1.0, 1.0)
    d = R * np.arccos(cosang)
    return float(d) if np.ndim(d) == 0 else d


def reflect_coeffs(coeffs, L_max: int) -> np.ndarray:
    """Coefficients of ``phi(-x1, x2, x3)`` (``phi -> pi - phi``)."""
    m = order_of_index(L_max)
    sign = np.where(m >= 0, (-1.0) ** np.abs(m), -((-1.0) ** np.abs(m)))
    return np.asarray(coeffs) * sign
