"""Stereographic chart of ``S_R`` and the plane and sphere symmetry maps.

``j_R`` sends the origin to the south pole ``(0, 0, -R)``; it carries the
surface measure to ``w_R dx`` and ``Delta_R`` to ``w_R^{-1} Delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sphere import GridField, SpectralField, evaluate

__all__ = [
    "j_R",
    "j_R_inverse",
    "weight_w",
    "weight_v",
    "PlaneGrid",
    "PlaneField",
    "pushforward_field",
    "reflect_plane",
    "map_T",
    "map_rot",
    "sphere_rotation_x3",
    "sphere_rotation_x2",
    "map_S",
    "jacobian_S",
    "translation_defect",
    "jacobian_defect",
    "disk_test_set",
    "plane_integral",
    "measure_identity_residual",
    "fd_laplacian",
    "laplacian_identity_residual",
]


def j_R(x, R: float) -> np.ndarray:
    """Inverse stereographic projection ``R^2 -> S_R``; input shape ``(..., 2)``."""
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    den = 4 * R * R + r2
    return np.stack(
        [4 * R * R * x[..., 0] / den, 4 * R * R * x[..., 1] / den, R * (r2 - 4 * R * R) / den],
        axis=-1,
    )


def j_R_inverse(y, R: float) -> np.ndarray:
    """Plane coordinates ``2R (y1, y2) / (R - y3)`` of a sphere point."""
    y = np.asarray(y, dtype=float)
    d = R - y[..., 2]
    return np.stack([2 * R * y[..., 0] / d, 2 * R * y[..., 1] / d], axis=-1)


def weight_w(x, R: float) -> np.ndarray:
    """Conformal factor ``16 R^4 / (4R^2 + |x|^2)^2``."""
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    return 16 * R**4 / (4 * R * R + r2) ** 2


def weight_v(x, L: float) -> np.ndarray:
    """Weight ``v_L = w_L^8 / (4 pi L^2)``."""
    return weight_w(x, L) ** 8 / (4 * math.pi * L * L)


@dataclass(frozen=True)
class PlaneGrid:
    """Periodic grid on ``[-S, S)^2`` with ``n_side`` nodes per axis (power of two)."""

    S: float
    n_side: int

    def __post_init__(self):
        if not self.S > 0:
            raise ValueError("S must be positive")
        if self.n_side < 2 or self.n_side & (self.n_side - 1):
            raise ValueError("n_side must be a power of two")

    @property
    def spacing(self) -> float:
        return 2 * self.S / self.n_side

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.S + self.spacing * np.arange(self.n_side)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n_side, n_side, 2)``, ``'ij'`` indexing."""
        X1, X2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([X1, X2], axis=-1)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        k = 2 * np.pi * np.fft.fftfreq(self.n_side, d=self.spacing)
        return np.meshgrid(k, k, indexing="ij")

    def integrate(self, values) -> np.ndarray:
        """Trapezoid (periodic) rule over the box."""
        return np.sum(values, axis=(-2, -1)) * self.spacing**2


@dataclass(frozen=True, eq=False)
class PlaneField:
    """Samples on a :class:`PlaneGrid`; leading axes of ``values`` are batch axes."""

    grid: PlaneGrid
    values: np.ndarray
    provenance: str = "synthetic"
    resolution: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape[-2:] != (self.grid.n_side, self.grid.n_side):
            raise ValueError("values do not match the plane grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("plane field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _evaluate_chunked(coeffs, pts3, R, chunk=None):
    flat = pts3.reshape(-1, 3)
    if chunk is None:
        # about 256 MB of harmonic values per block
        chunk = max(1024, int(3.2e7 // coeffs.shape[-1]))
    out = np.empty(coeffs.shape[:-1] + (flat.shape[0],))
    for s in range(0, flat.shape[0], chunk):
        out[..., s : s + chunk] = evaluate(coeffs, flat[s : s + chunk], R)
    return out.reshape(coeffs.shape[:-1] + pts3.shape[:-1])


def pushforward_field(phi, plane: PlaneGrid, warn: bool = True) -> PlaneField:
    """Samples of ``phi o j_R`` on the plane nodes.

    ``phi`` is a :class:`SpectralField` (or a :class:`GridField`, analyzed
    first). Values come from direct harmonic evaluation at ``j_R(x)``. The
    ``resolution`` attribute is the number of plane nodes per shortest
    wavelength at the origin, where the chart stretches least; fewer than 4
    triggers a warning.
    """
    if isinstance(phi, GridField):
        g = phi.grid
        phi = SpectralField(g.R, g.L_max, g.analyze(phi.values))
    R, L = phi.R, phi.L_max
    vals = _evaluate_chunked(phi.coeffs, j_R(plane.points, R), R)
    wavelength = 2 * math.pi * R / max(L, 1)
    res = wavelength / plane.spacing
    if warn and res < 4:
        warnings.warn(
            f"plane spacing {plane.spacing:.3g} resolves the band limit with only "
            f"{res:.2f} nodes per wavelength",
            RuntimeWarning,
            stacklevel=2,
        )
    return PlaneField(plane, vals, f"pushforward(R={R:g}, L_max={L})", res)


def reflect_plane(f: PlaneField) -> PlaneField:
    """``(Theta f)(x1, x2) = f(-x1, x2)`` on the periodic grid (node exact)."""
    n = f.grid.n_side
    idx = (-np.arange(n)) % n
    return PlaneField(f.grid, f.values[..., idx, :], f.provenance, f.resolution)


# -- symmetry maps -----------------------------------------------------------


def map_T(x, alpha: float) -> np.ndarray:
    """Translation by ``alpha`` along ``x1``."""
    x = np.array(x, dtype=float)
    x[..., 0] += alpha
    return x


def map_rot(x, alpha: float) -> np.ndarray:
    """Plane rotation ``(x1 cos a + x2 sin a, -x1 sin a + x2 cos a)``."""
    x = np.asarray(x, dtype=float)
    c, s = math.cos(alpha), math.sin(alpha)
    return np.stack([c * x[..., 0] + s * x[..., 1], -s * x[..., 0] + c * x[..., 1]], axis=-1)


def sphere_rotation_x3(y, alpha: float) -> np.ndarray:
    """Rotation about the ``x3`` axis, matching :func:`map_rot` under ``j_R``."""
    y = np.asarray(y, dtype=float)
    c, s = math.cos(alpha), math.sin(alpha)
    return np.stack(
        [c * y[..., 0] + s * y[..., 1], -s * y[..., 0] + c * y[..., 1], y[..., 2]], axis=-1
    )


def sphere_rotation_x2(y, alpha: float, R: float) -> np.ndarray:
    """Rotation about the ``x2`` axis by angle ``alpha / R`` (arc length ``alpha``)."""
    y = np.asarray(y, dtype=float)
    a = alpha / R
    c, s = math.cos(a), math.sin(a)
    return np.stack(
        [c * y[..., 0] - s * y[..., 2], y[..., 1], s * y[..., 0] + c * y[..., 2]], axis=-1
    )


def map_S(x, R: float, alpha: float) -> np.ndarray:
    """Plane map conjugate to :func:`sphere_rotation_x2` on the disk ``|x| < R``.

    Raises
    ------
    ValueError
        For ``|alpha| >= R`` or any ``|x| >= R``.
    """
    if abs(alpha) >= R:
        raise ValueError("need |alpha| < R")
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    if np.any(r2 >= R * R):
        raise ValueError("map_S is defined only on the open disk of radius R")
    a = alpha / R
    c, s = math.cos(a), math.sin(a)
    q = r2 / (4 * R * R)
    den = 1 + c + (1 - c) * q - x[..., 0] / R * s
    return np.stack([2 * (R * s * (1 - q) + x[..., 0] * c) / den, 2 * x[..., 1] / den], axis=-1)


# central difference weights for first and second derivatives, 4th order
_D1 = (np.array([1, -8, 0, 8, -1]) / 12.0, np.arange(-2, 3))
_D2 = (np.array([-1, 16, -30, 16, -1]) / 12.0, np.arange(-2, 3))


def _partial(fn, x, axes, h):
    """Finite-difference mixed partial of ``fn`` along ``axes`` (length 1 or 2)."""
    x = np.asarray(x, dtype=float)
    if len(axes) == 1:
        (i,) = axes
        out = 0.0
        for w, k in zip(*_D1):
            if w:
                e = np.zeros(2)
                e[i] = k * h
                out = out + w * fn(x + e)
        return out / h
    i, j = axes
    if i == j:
        out = 0.0
        for w, k in zip(*_D2):
            e = np.zeros(2)
            e[i] = k * h
            out = out + w * fn(x + e)
        return out / h**2
    inner = lambda y: _partial(fn, y, (j,), h)
    return _partial(inner, x, (i,), h)


def jacobian_S(x, R: float, alpha: float, h: float = 1e-4) -> np.ndarray:
    """Jacobian matrix of :func:`map_S`, shape ``(..., 2, 2)``."""
    cols = [_partial(lambda y: map_S(y, R, alpha), x, (i,), h) for i in range(2)]
    return np.stack(cols, axis=-1)


def disk_test_set(M: float, n_r: int = 12, n_ang: int = 24) -> np.ndarray:
    """Deterministic points filling the closed disk ``|x| <= M``."""
    r = M * np.sqrt(np.linspace(0, 1, n_r))
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    pts = np.stack(
        [np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=-1
    )
    return np.unique(np.round(pts, 14), axis=0)


def translation_defect(R: float, alpha: float, points, order: int, h: float | None = None):
    """``sup_x max_{|a| = order} |d^a S_{R,alpha}(x) - d^a T_alpha(x)|``.

    Derivatives are 4th-order central differences with step ``h``
    (default ``1e-2``); ``T_alpha`` has identity Jacobian and vanishing second
    derivatives.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    pts = np.asarray(points, dtype=float)
    if R <= max(abs(alpha), float(np.max(np.linalg.norm(pts, axis=-1)))):
        raise ValueError("need R > max(|alpha|, sup |x|)")
    if h is None:
        h = 1e-2
    S = lambda y: map_S(y, R, alpha)
    if order == 0:
        return float(np.max(np.linalg.norm(S(pts) - map_T(pts, alpha), axis=-1)))
    if order == 1:
        best = 0.0
        for i in range(2):
            d = _partial(S, pts, (i,), h)
            d[..., i] -= 1.0
            best = max(best, float(np.max(np.linalg.norm(d, axis=-1))))
        return best
    best = 0.0
    for axes in ((0, 0), (0, 1), (1, 1)):
        d = _partial(S, pts, axes, h)
        best = max(best, float(np.max(np.linalg.norm(d, axis=-1))))
    return best


def jacobian_defect(R: float, alpha: float, points) -> float:
    """``sup_x |det D S_{R,alpha}(x) - 1|``."""
    J = jacobian_S(points, R, alpha)
    return float(np.max(np.abs(np.linalg.det(J) - 1.0)))


# -- stereographic identities ------------------------------------------------


def plane_integral(fn, R: float, n_r: int = 96, n_ang: int = 128) -> float:
    """``int_{R^2} fn(x) w_R(x) dx`` by polar quadrature with ``r = 2R u/(1-u)``.

    The substitution compactifies the radial half-line to ``u in [0, 1)``;
    Gauss--Legendre is used in ``u`` and the trapezoid rule in angle.
    """
    u, wu = np.polynomial.legendre.leggauss(n_r)
    u = 0.5 * (u + 1)
    wu = 0.5 * wu
    r = 2 * R * u / (1 - u)
    # w_R(r) r dr/du collapses to a rational function of u
    radial = 4 * R * R * u * (1 - u) / ((1 - u) ** 2 + u * u) ** 2 * wu
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    pts = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1)
    vals = np.asarray(fn(pts), dtype=float)
    return float(np.sum(vals * radial[:, None]) * (2 * np.pi / n_ang))


def measure_identity_residual(phi: SpectralField, n_r: int = 96, n_ang: int = 128) -> float:
    """``|int_S f rho_R - int_{R^2} (f o j_R) w_R dx|`` for a band-limited ``f``.

    The sphere side is exact: only the constant mode integrates to non-zero.
    """
    R = phi.R
    exact = phi.coeffs[0] * math.sqrt(4 * math.pi) * R
    approx = plane_integral(lambda x: evaluate(phi.coeffs, j_R(x, R), R), R, n_r, n_ang)
    return abs(approx - exact)


def fd_laplacian(fn, x, h: float) -> np.ndarray:
    """Plane Laplacian of ``fn`` at ``x`` by 8th-order central differences."""
    w = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
    ks = np.arange(-4, 5)
    x = np.asarray(x, dtype=float)
    out = 0.0
    for i in range(2):
        for wk, k in zip(w, ks):
            e = np.zeros(2)
            e[i] = k * h
            out = out + wk * fn(x + e)
    return out / h**2


def laplacian_identity_residual(phi: SpectralField, points, h: float | None = None) -> float:
    """Relative sup error of ``(Delta_R f) o j_R = w_R^{-1} Delta (f o j_R)``."""
    R, L = phi.R, phi.L_max
    if h is None:
        h = 0.05 * R / (L + 1)
    l = np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)
    lap = -l * (l + 1) / R**2 * phi.coeffs
    pts = np.asarray(points, dtype=float)
    lhs = evaluate(lap, j_R(pts, R), R)
    f = lambda y: evaluate(phi.coeffs, j_R(y, R), R)
    rhs = fd_laplacian(f, pts, h) / weight_w(pts, R)
    scale = max(float(np.max(np.abs(lhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)
