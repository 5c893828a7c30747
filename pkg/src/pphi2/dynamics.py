"""Langevin dynamics for the cutoff measures.

The free equation ``dZ = -Q Z dt + sqrt(2) dW`` is integrated with its exact
per-mode transition. The interacting equation adds the drift
``N(phi) = -lambda P'(phi, c) + phi(g)^{n-1} g`` and is advanced by exponential
Euler::

    phi+ = e^{-dt Q} phi + Q^{-1} (1 - e^{-dt Q}) N(phi) + sqrt((1 - e^{-2 dt Q}) / Q) xi

The split form ``phi = Z + psi`` advances ``Z`` with the same noise and ``psi``
deterministically with the remainder nonlinearity. Fields are handled as
batches of coefficient arrays of shape ``(lanes, n_coeffs)``; lanes are
independent chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gaussian import GaussianSampler, counterterm
from .sphere import (
    SphereGrid,
    SpectralField,
    ZonalMultiplier,
    build_multiplier,
    n_coeffs,
)
from .streams import stream_rng
from .wick import (
    PolynomialSpec,
    WickContext,
    remainder_coeffs,
    wick_derivative,
    wick_polynomial,
    wick_power,
)

__all__ = [
    "BLOWUP_THRESHOLD",
    "BlowUpError",
    "IntegratorConfig",
    "LangevinState",
    "LangevinModel",
    "default_dt",
    "ou_coefficients",
    "ou_step",
    "interacting_step",
    "remainder_step",
    "ChainResult",
    "run_chain",
    "integrated_autocorr_time",
    "GibbsResult",
    "gibbs_sampler",
    "partition_functions",
    "OUCoefficients",
]

BLOWUP_THRESHOLD = 1e6


class BlowUpError(FloatingPointError):
    """Sup-norm of the field exceeded the blow-up threshold."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def default_dt(Q: ZonalMultiplier) -> float:
    """Step-size policy ``0.1 / sqrt(q_{L_max})``."""
    return 0.1 / math.sqrt(float(Q.values[-1]))


@dataclass(frozen=True)
class IntegratorConfig:
    """Time stepping parameters. ``dt=None`` selects :func:`default_dt`."""

    dt: float | None = None
    scheme: str = "exponential-euler"
    steps: int = 1000
    burn_in: int = 0
    thinning: int = 1

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("exact-ou", "exponential-euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.burn_in < 0 or self.burn_in >= self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")

    @property
    def noise_scale(self) -> float:
        return math.sqrt(2.0)


@dataclass(frozen=True)
class OUCoefficients:
    decay: np.ndarray
    phi1: np.ndarray
    noise_sd: np.ndarray


def ou_coefficients(Q: ZonalMultiplier, dt: float) -> OUCoefficients:
    """Per-coefficient ``e^{-q dt}``, ``(1 - e^{-q dt})/q`` and noise std."""
    q = Q.expanded()
    decay = np.exp(-q * dt)
    phi1 = -np.expm1(-q * dt) / q
    sd = np.sqrt(-np.expm1(-2 * q * dt) / q)
    return OUCoefficients(decay, phi1, sd)


def ou_step(Z, dt: float, Q: ZonalMultiplier, rng=None, noise=None):
    """Exact Ornstein--Uhlenbeck transition over ``dt``.

    ``Z`` is a :class:`SpectralField` or a coefficient batch. ``noise`` (standard
    normals of the same shape) overrides ``rng``; pass zeros for the
    deterministic part.
    """
    co = ou_coefficients(Q, dt)
    coeffs = Z.coeffs if isinstance(Z, SpectralField) else np.asarray(Z, dtype=float)
    if noise is None:
        if rng is None:
            raise ValueError("need rng or explicit noise")
        noise = rng.standard_normal(coeffs.shape)
    out = co.decay * coeffs + co.noise_sd * noise
    if isinstance(Z, SpectralField):
        return SpectralField(Z.R, Z.L_max, out)
    return out


class LangevinModel:
    """Discretized drift for ``mu^g_{R,N}`` at band limit ``L_max``.

    Parameters
    ----------
    R, N : float
    L_max : int
    spec : PolynomialSpec
    ctx : WickContext, optional
        Counterterm and source; the default counterterm is the exact variance
        of the band-limited free field, so Wick powers are centered.
    """

    def __init__(
        self,
        R: float,
        N: float,
        L_max: int,
        spec: PolynomialSpec,
        ctx: WickContext | None = None,
    ):
        self.R, self.N, self.L_max, self.spec = float(R), float(N), int(L_max), spec
        if ctx is None:
            ctx = WickContext(counterterm(R, N, L_max).value)
        if ctx.g is not None and ctx.g.L_max != L_max:
            raise ValueError("source band limit must equal L_max")
        self.ctx = ctx
        self.Q = build_multiplier("Q_RN", R, N, L_max)
        self.G = build_multiplier("G_RN", R, N, L_max)
        self.grid = SphereGrid.for_degree(R, L_max, spec.degree)
        self._rem = [
            (m - l, l, coef)
            for (m, l), coef in remainder_coeffs(spec).items()
            if coef != 0.0
        ]

    @property
    def c(self) -> float:
        return self.ctx.c

    @property
    def ncoeff(self) -> int:
        return n_coeffs(self.L_max)

    def _source_term(self, phi):
        g = self.ctx.g
        if g is None:
            return 0.0
        n = self.spec.degree
        s = phi @ g.coeffs
        return (s ** (n - 1))[..., None] * g.coeffs

    def _check(self, vals, where):
        peak = float(np.max(np.abs(vals))) if vals.size else 0.0
        if not math.isfinite(peak) or peak > BLOWUP_THRESHOLD:
            raise BlowUpError(
                f"field sup-norm {peak:.3e} exceeds {BLOWUP_THRESHOLD:.0e} ({where})",
                {"sup_norm": peak, "where": where},
            )

    def drift(self, phi) -> np.ndarray:
        """``-lambda P'(phi, c)`` projected to degree ``L_max``, plus the source term."""
        phi = np.asarray(phi, dtype=float)
        vals = self.grid.synthesize(phi, self.L_max)
        self._check(vals, "drift")
        dP = wick_derivative(vals, self.spec, self.c)
        out = -self.spec.coupling * self.grid.analyze(dP, self.L_max)
        return out + self._source_term(phi)

    def remainder_drift(self, psi, z) -> np.ndarray:
        """``-lambda psi^{n-1} + lambda sum a_{m,l} z^{:m-l:} psi^l`` plus source."""
        psi = np.asarray(psi, dtype=float)
        z = np.asarray(z, dtype=float)
        pv = self.grid.synthesize(psi, self.L_max)
        zv = self.grid.synthesize(z, self.L_max)
        self._check(pv, "remainder")
        n = self.spec.degree
        zw = {k: wick_power(zv, k, self.c) for k in {k for k, _, _ in self._rem}}
        pw = [np.ones_like(pv)]
        for _ in range(n - 2):
            pw.append(pw[-1] * pv)
        rhs = -pw[-1] * pv
        for k, l, coef in self._rem:
            rhs = rhs + coef * zw[k] * pw[l]
        out = self.spec.coupling * self.grid.analyze(rhs, self.L_max)
        return out + self._source_term(psi + z)

    def potential(self, phi) -> np.ndarray:
        """``lambda int P(phi, c) rho_R - phi(g)^n / n`` for a coefficient batch."""
        phi = np.asarray(phi, dtype=float)
        vals = self.grid.synthesize(phi, self.L_max)
        V = self.spec.coupling * (wick_polynomial(vals, self.spec, self.c) @ self.grid.weights)
        if self.ctx.g is not None:
            V = V - (phi @ self.ctx.g.coeffs) ** self.spec.degree / self.spec.degree
        return V

    def energy(self, phi) -> np.ndarray:
        """``lambda int P(phi, c) + 1/2 <phi, Q phi>`` (gradient-flow Lyapunov functional)."""
        phi = np.asarray(phi, dtype=float)
        return self.potential(phi) + 0.5 * np.sum(self.Q.expanded() * phi * phi, axis=-1)

    def gaussian_sampler(self, seed: int = 0, stream: int = 0) -> GaussianSampler:
        return GaussianSampler(self.R, self.G, seed, stream)


@dataclass
class LangevinState:
    """Mutable chain state: time, field batch(es) and bookkeeping.

    In ``full`` mode ``fields = (phi,)``; in ``split`` mode ``fields = (Z, psi)``.
    """

    t: float
    mode: str
    fields: tuple
    step: int = 0
    seed: int = 0
    stream: int = 0

    @property
    def phi(self) -> np.ndarray:
        return self.fields[0] if self.mode == "full" else self.fields[0] + self.fields[1]


def interacting_step(phi, dt, model: LangevinModel, rng=None, noise=None, drift=True):
    """One exponential-Euler step of the full equation for a coefficient batch."""
    co = ou_coefficients(model.Q, dt)
    phi = np.asarray(phi, dtype=float)
    if noise is None:
        noise = rng.standard_normal(phi.shape) if rng is not None else 0.0
    out = co.decay * phi + co.noise_sd * noise
    if drift:
        out = out + co.phi1 * model.drift(phi)
    return out


def remainder_step(psi, z, dt, model: LangevinModel, rng=None, noise=None):
    """Advance ``(psi, Z)``: ``Z`` by the exact OU step, ``psi`` deterministically."""
    co = ou_coefficients(model.Q, dt)
    z = np.asarray(z, dtype=float)
    if noise is None:
        noise = rng.standard_normal(z.shape) if rng is not None else 0.0
    psi_new = co.decay * psi + co.phi1 * model.remainder_drift(psi, z)
    z_new = co.decay * z + co.noise_sd * noise
    return psi_new, z_new


# -- chains ------------------------------------------------------------------


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window.

    ``x`` has shape ``(T,)`` or ``(T, lanes)``; autocovariances are averaged
    over lanes. Returned in units of samples (1 for white noise).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if T < 4:
        return float("nan")
    y = x - x.mean(axis=0)
    nfft = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(y, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:T].mean(axis=1)
    if acov[0] <= 0:
        return 1.0
    rho = acov / acov[0]
    tau = 2.0 * np.cumsum(rho) - 1.0
    for M in range(1, T):
        if M >= c * tau[M]:
            return float(max(tau[M], 1e-12))
    return float(tau[-1])


@dataclass
class ChainResult:
    """Output of :func:`run_chain`.

    Attributes
    ----------
    times : ndarray
        Times of the kept samples.
    samples : ndarray or None
        Kept field coefficients, shape ``(n_kept, lanes, n_coeffs)``.
    split_samples : tuple or None
        ``(Z, psi)`` kept samples in split mode.
    observables : dict
        ``name -> (n_kept, lanes)`` series.
    means, variances : dict
        Over all kept samples and lanes.
    iat : dict
        Integrated autocorrelation time (in kept samples) per observable.
    state : LangevinState
        Final state; pass back as ``initial`` to continue the chain.
    """

    times: np.ndarray
    samples: np.ndarray | None
    split_samples: tuple | None
    observables: dict
    means: dict
    variances: dict
    iat: dict
    state: LangevinState
    dt: float

    def standard_error(self, name: str) -> float:
        """Error of the mean from lane-to-lane scatter of per-lane means."""
        series = self.observables[name]
        lane_means = series.mean(axis=0)
        k = lane_means.size
        if k > 1:
            return float(lane_means.std(ddof=1) / math.sqrt(k))
        n = series.shape[0]
        return float(math.sqrt(series.var() * self.iat[name] / n))


def _initial_fields(model, initial, lanes, seed, stream, mode):
    nc = model.ncoeff
    if isinstance(initial, LangevinState):
        return initial
    if isinstance(initial, str):
        if initial == "zero":
            phi = np.zeros((lanes, nc))
        elif initial == "gaussian":
            phi = model.gaussian_sampler(seed, stream).sample(lanes, index=1)
        elif initial == "gibbs":
            res = gibbs_sampler(
                model.R, model.N, model.L_max, model.spec, model.ctx,
                draws=64, lanes=lanes, seed=seed, stream=stream + 1_000_003,
            )
            phi = res.samples[-1]
        else:
            raise ValueError(f"unknown initial condition {initial!r}")
    else:
        phi = np.array(initial, dtype=float).reshape(lanes, nc)
    if mode == "full":
        fields = (phi,)
    else:
        fields = (np.zeros_like(phi), phi.copy())
    return LangevinState(0.0, mode, fields, 0, seed, stream)


def run_chain(
    model: LangevinModel,
    config: IntegratorConfig,
    initial="gaussian",
    lanes: int = 1,
    seed: int = 0,
    stream: int = 0,
    mode: str = "full",
    drift: bool = True,
    noise: bool = True,
    observables: dict[str, Callable] | None = None,
    keep_samples: bool = True,
    callback: Callable | None = None,
) -> ChainResult:
    """Run ``lanes`` independent chains for ``config.steps`` steps.

    Samples are kept after ``burn_in`` every ``thinning`` steps. Noise is drawn
    from one counter-based stream, one ``(lanes, n_coeffs)`` block per step, so
    runs in ``full`` and ``split`` mode with the same seed share their noise.
    ``callback(state)`` is invoked at every kept sample.

    Raises
    ------
    BlowUpError
        If the field sup-norm exceeds :data:`BLOWUP_THRESHOLD`.
    FloatingPointError
        If an observable is not finite.
    """
    if mode not in ("full", "split"):
        raise ValueError("mode must be 'full' or 'split'")
    dt = config.dt if config.dt is not None else default_dt(model.Q)
    if config.scheme == "exact-ou":
        drift = False
    state = _initial_fields(model, initial, lanes, seed, stream, mode)
    lanes = state.fields[0].shape[0]
    rng = stream_rng(seed, stream, 2 + state.step)
    co = ou_coefficients(model.Q, dt)
    observables = observables or {}
    kept_t, kept_phi, kept_z, kept_psi = [], [], [], []
    obs = {k: [] for k in observables}
    for s in range(config.steps):
        xi = rng.standard_normal((lanes, model.ncoeff)) if noise else 0.0
        if state.mode == "full":
            (phi,) = state.fields
            new = co.decay * phi + co.noise_sd * xi
            if drift:
                new = new + co.phi1 * model.drift(phi)
            state.fields = (new,)
        else:
            z, psi = state.fields
            if drift:
                psi = co.decay * psi + co.phi1 * model.remainder_drift(psi, z)
            else:
                psi = co.decay * psi
            z = co.decay * z + co.noise_sd * xi
            state.fields = (z, psi)
        state.step += 1
        state.t += dt
        if s >= config.burn_in and (s - config.burn_in) % config.thinning == 0:
            phi = state.phi
            kept_t.append(state.t)
            if keep_samples:
                kept_phi.append(phi.copy())
                if state.mode == "split":
                    kept_z.append(state.fields[0].copy())
                    kept_psi.append(state.fields[1].copy())
            for k, fn in observables.items():
                v = np.asarray(fn(phi), dtype=float)
                if not np.all(np.isfinite(v)):
                    raise FloatingPointError(f"observable {k!r} not finite at step {s}")
                obs[k].append(v)
            if callback is not None:
                callback(state)
    series = {k: np.array(v) for k, v in obs.items()}
    means = {k: float(v.mean()) for k, v in series.items()}
    variances = {k: float(v.var()) for k, v in series.items()}
    iat = {k: integrated_autocorr_time(v) for k, v in series.items()}
    return ChainResult(
        times=np.array(kept_t),
        samples=np.array(kept_phi) if keep_samples else None,
        split_samples=(np.array(kept_z), np.array(kept_psi))
        if keep_samples and state.mode == "split"
        else None,
        observables=series,
        means=means,
        variances=variances,
        iat=iat,
        state=state,
        dt=dt,
    )


# -- direct sampling of the finite-dimensional density -----------------------


@dataclass
class GibbsResult:
    """Draws from ``exp(-V) d nu`` at small band limit.

    For ``method='metropolis'``, ``samples`` has shape ``(draws, lanes,
    n_coeffs)`` and ``weights`` is None. For ``'importance'``, ``samples`` are
    proposals from ``nu`` and ``weights`` the normalized importance weights.
    """

    samples: np.ndarray
    acceptance: float
    ess: float
    method: str
    weights: np.ndarray | None = None
    potential: np.ndarray | None = None

    def expect(self, fn: Callable) -> tuple[float, float]:
        """Mean and standard error of ``fn(phi)``."""
        if self.method == "importance":
            flat = self.samples.reshape(-1, self.samples.shape[-1])
            v = np.asarray(fn(flat), dtype=float)
            w = self.weights.ravel()
            mean = float(w @ v)
            se = float(math.sqrt(np.sum(w**2 * (v - mean) ** 2)))
            return mean, se
        v = np.asarray(fn(self.samples), dtype=float)
        lane_means = v.mean(axis=0)
        return float(lane_means.mean()), float(lane_means.std(ddof=1) / math.sqrt(lane_means.size))


def gibbs_sampler(
    R: float,
    N: float,
    L_max: int,
    spec: PolynomialSpec,
    ctx: WickContext | None = None,
    draws: int = 1000,
    lanes: int = 256,
    seed: int = 0,
    stream: int = 0,
    method: str = "metropolis",
    burn_in: int = 50,
) -> GibbsResult:
    """Sample the density ``exp(-V(phi)) d nu_{R,N}(phi)`` at ``L_max <= 6``.

    ``metropolis`` runs ``lanes`` independence Metropolis--Hastings chains
    with exact proposals from ``nu_{R,N}``; ``importance`` weights ``draws *
    lanes`` independent proposals.

    Raises
    ------
    ValueError
        If ``L_max > 6``.
    RuntimeError
        If the Metropolis acceptance rate falls below 1%.
    """
    if L_max > 6:
        raise ValueError("direct sampling is limited to L_max <= 6")
    model = LangevinModel(R, N, L_max, spec, ctx)
    sampler = model.gaussian_sampler(seed, stream)
    if method == "importance":
        X = sampler.sample(draws * lanes, index=0).reshape(draws, lanes, -1)
        V = model.potential(X)
        lw = -(V - V.min())
        w = np.exp(lw)
        w /= w.sum()
        ess = float(1.0 / np.sum(w**2))
        return GibbsResult(X, 1.0, ess, method, w, V)
    if method != "metropolis":
        raise ValueError(f"unknown method {method!r}")
    total = burn_in + draws
    cur = sampler.sample(lanes, index=0)
    v_cur = model.potential(cur)
    out = np.empty((draws, lanes, model.ncoeff))
    vs = np.empty((draws, lanes))
    accepted = 0
    for t in range(total):
        prop = sampler.sample(lanes, index=1 + t)
        v_prop = model.potential(prop)
        u = stream_rng(seed, stream + 1, t).random(lanes)
        acc = np.log(u) < v_cur - v_prop
        cur = np.where(acc[:, None], prop, cur)
        v_cur = np.where(acc, v_prop, v_cur)
        if t >= burn_in:
            out[t - burn_in] = cur
            vs[t - burn_in] = v_cur
            accepted += int(acc.sum())
    rate = accepted / (draws * lanes)
    if rate < 0.01:
        raise RuntimeError(f"Metropolis acceptance {rate:.4f} below 1%")
    tau = integrated_autocorr_time(vs)
    return GibbsResult(out, rate, draws * lanes / tau, method, None, vs)


def partition_functions(
    R, N, L_max, spec, g: SpectralField | None, draws=200_000, seed=0, stream=0
) -> dict:
    """Monte Carlo ``Z = E_nu e^{-Y}`` and ``Z^g = E_nu e^{-Y + X(g)^n/n}`` with errors."""
    model = LangevinModel(R, N, L_max, spec)
    X = model.gaussian_sampler(seed, stream).sample(draws)
    Y = model.potential(X)
    e = np.exp(-Y)
    out = {"Z": float(e.mean()), "Z_se": float(e.std() / math.sqrt(draws))}
    if g is not None:
        n = spec.degree
        eg = np.exp(-Y + (X @ g.coeffs) ** n / n)
        out["Zg"] = float(eg.mean())
        out["Zg_se"] = float(eg.std() / math.sqrt(draws))
    return out
