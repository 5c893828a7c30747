"""Command line interface: configuration, orchestration and persistence.

Subcommands ``counterterm``, ``langevin``, ``verify``, ``project`` and
``gibbs`` read a flat ``key = value`` configuration, write a manifest before
any data, and place all artifacts in a fresh output directory.

Exit codes: 0 pass, 1 usage, 2 numerical failure, 3 verdict failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import math
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERDICT = 0, 1, 2, 3

SNAPSHOT_MAGIC = b"PPHI2SNP"
PLANE_MAGIC = b"PPHI2PLN"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sII d QQQ QQ")  # 64 bytes
assert _HEADER.size == 64


class UsageError(Exception):
    """Bad configuration or command line."""


# -- configuration -----------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(" ", "").split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _opt_int(text: str):
    return None if text in ("auto", "") else int(text)


def _opt_float(text: str):
    return None if text in ("auto", "") else float(text)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; field names carry their units or roles."""

    radius_R: float = 1.0
    cutoff_N: float = 2.0
    band_limit_L: int | None = None
    plane_extent_S: float = 8.0
    plane_nodes_n_side: int = 128
    weight_L: float = 1.0
    kappa: float = 0.05
    poly_degree_n: int = 4
    poly_coeffs_a: tuple[float, ...] = ()
    coupling_lambda: float = 1.0
    source_g: str = "zero"
    dt_time: float | None = None
    scheme: str = "exponential-euler"
    mode: str = "full"
    drift: str = "on"
    steps_count: int = 1000
    burn_in_steps: int = 0
    thinning_steps: int = 1
    chains_count: int = 4
    draws_count: int = 2000
    seed: int = 0
    suite: str = "rp"
    sweep_N: tuple[int, ...] = (2, 4, 8, 16, 32, 64, 128, 256)
    sweep_R: tuple[float, ...] = (1.0, 2.0, 4.0)
    rotation_alpha: float = 0.7
    input_archive: str = ""

    def __post_init__(self):
        if self.radius_R <= 0:
            raise UsageError("radius_R must be positive")
        if self.cutoff_N < 1:
            raise UsageError("cutoff_N must be at least 1")
        if self.band_limit_L is not None and self.band_limit_L < 0:
            raise UsageError("band_limit_L must be non-negative")
        n = self.plane_nodes_n_side
        if n < 2 or n & (n - 1):
            raise UsageError("plane_nodes_n_side must be a power of two")
        if self.poly_degree_n < 2 or self.poly_degree_n % 2:
            raise UsageError("poly_degree_n must be even and at least 2")
        if self.poly_coeffs_a and len(self.poly_coeffs_a) != self.poly_degree_n + 1:
            raise UsageError("poly_coeffs_a needs n + 1 entries a_0..a_n")
        if self.scheme not in ("exponential-euler", "exact-ou"):
            raise UsageError("scheme must be exponential-euler or exact-ou")
        if self.mode not in ("full", "split"):
            raise UsageError("mode must be full or split")
        if self.drift not in ("on", "off"):
            raise UsageError("drift must be on or off")
        if self.suite not in SUITES:
            raise UsageError(f"suite must be one of {sorted(SUITES)}")
        if self.steps_count < 0 or self.burn_in_steps < 0 or self.thinning_steps < 1:
            raise UsageError("invalid step counts")
        if self.chains_count < 1 or self.draws_count < 1:
            raise UsageError("chains_count and draws_count must be positive")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.source_g != "zero" and not self.source_g.startswith("gaussian:"):
            raise UsageError("source_g must be 'zero' or 'gaussian:<scale>'")

    @property
    def L_max(self) -> int:
        from .sphere import default_band_limit

        return self.band_limit_L if self.band_limit_L is not None else default_band_limit(self.radius_R, self.cutoff_N)

    def poly_spec(self):
        from .wick import PolynomialSpec

        if self.poly_coeffs_a:
            return PolynomialSpec(tuple(self.poly_coeffs_a), self.coupling_lambda)
        return PolynomialSpec.pure(self.poly_degree_n, self.coupling_lambda)

    def canonical(self) -> str:
        """Sorted ``key = value`` text; its hash identifies the run."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif v is None:
                v = "auto"
            lines.append(f"{f.name} = {v}")
        return "\n".join(sorted(lines)) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_PARSERS = {
    "radius_R": float,
    "cutoff_N": float,
    "band_limit_L": _opt_int,
    "plane_extent_S": float,
    "plane_nodes_n_side": int,
    "weight_L": float,
    "kappa": float,
    "poly_degree_n": int,
    "poly_coeffs_a": _floats,
    "coupling_lambda": float,
    "source_g": str,
    "dt_time": _opt_float,
    "scheme": str,
    "mode": str,
    "drift": str,
    "steps_count": int,
    "burn_in_steps": int,
    "thinning_steps": int,
    "chains_count": int,
    "draws_count": int,
    "seed": int,
    "suite": str,
    "sweep_N": _ints,
    "sweep_R": _floats,
    "rotation_alpha": float,
    "input_archive": str,
}


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse flat ``key = value`` text (``#`` starts a comment).

    Raises
    ------
    UsageError
        On unknown keys, duplicates or malformed values.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise UsageError(f"line {lineno}: bad value for {key}: {exc}") from None
    values.update(overrides or {})
    return RunConfig(**values)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Read a config file, or a manifest (``.json``) whose hash must match."""
    if path is None:
        return RunConfig(**(overrides or {}))
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} not found")
    if p.suffix == ".json":
        man = json.loads(p.read_text())
        cfg = parse_config(man["config"])
        if cfg.digest() != man["config_sha256"]:
            raise UsageError("manifest config hash mismatch")
        return replace(cfg, **(overrides or {})) if overrides else cfg
    return parse_config(p.read_text(), overrides)


# -- persistence -------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_snapshot(path, coeffs, R: float, L_max: int, meta: dict | None = None, magic=SNAPSHOT_MAGIC):
    """Write ``(count, n_values)`` float64 little-endian rows behind a 64-byte
    header, plus a JSON sidecar ``<path>.json``."""
    a = np.ascontiguousarray(np.asarray(coeffs, dtype="<f8"))
    a = a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.reshape(1, -1)
    header = _HEADER.pack(magic, SNAPSHOT_VERSION, 0, float(R), int(L_max), a.shape[0], a.shape[1], 0, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.tobytes(order="C"))
    side = dict(meta or {})
    side.update({"R": float(R), "L_max": int(L_max), "count": int(a.shape[0]), "width": int(a.shape[1])})
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_snapshot`; returns ``(array, header)``."""
    raw = Path(path).read_bytes()
    if len(raw) < 64:
        raise ValueError("snapshot too short")
    magic, version, _, R, L, count, width, _, _ = _HEADER.unpack(raw[:64])
    if magic not in (SNAPSHOT_MAGIC, PLANE_MAGIC) or version != SNAPSHOT_VERSION:
        raise ValueError("not a snapshot file")
    a = np.frombuffer(raw[64:], dtype="<f8")
    if a.size != count * width:
        raise ValueError("snapshot payload size mismatch")
    return a.reshape(count, width).astype(float), {
        "magic": magic.decode(),
        "R": R,
        "L_max": L,
        "count": count,
        "width": width,
    }


def write_csv(path, header: list[str], rows) -> None:
    """CSV with a header row and a trailing ``# sha256=`` line over the preceding bytes."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    body = buf.getvalue().encode()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(f"# sha256={hashlib.sha256(body).hexdigest()}\n".encode())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV written by :func:`write_csv`, verifying its checksum."""
    raw = Path(path).read_bytes()
    body, _, tail = raw.rstrip(b"\n").rpartition(b"\n")
    body += b"\n"
    if not tail.startswith(b"# sha256=") or tail[9:].decode() != hashlib.sha256(body).hexdigest():
        raise ValueError("CSV checksum mismatch")
    lines = body.decode().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class RunDir:
    """Fresh output directory with a manifest written before any data."""

    def __init__(self, out: str, command: str, cfg: RunConfig, seeds: list[int]):
        self.path = Path(out)
        if self.path.exists() and any(self.path.iterdir()):
            raise UsageError(f"output directory {out} is not empty")
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": command,
            "code_version": __version__,
            "config": cfg.canonical(),
            "config_sha256": cfg.digest(),
            "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "finished": None,
            "chain_seeds": seeds,
            "artifacts": {},
        }
        self._write_manifest()

    def _write_manifest(self):
        (self.path / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")

    def file(self, name: str) -> Path:
        return self.path / name

    def register(self, *names: str):
        for name in names:
            self.manifest["artifacts"][name] = sha256_file(self.path / name)

    def finish(self, status: str):
        self.manifest["finished"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.manifest["status"] = status
        self._write_manifest()


# -- commands ----------------------------------------------------------------


def _source(cfg: RunConfig):
    from .sphere import SpectralField
    from .verify import plane_source

    if cfg.source_g == "zero":
        return None
    scale = float(cfg.source_g.split(":", 1)[1])
    L = cfg.L_max
    return SpectralField(cfg.radius_R, L, scale * plane_source(cfg.radius_R, L))


def _model(cfg: RunConfig):
    from .dynamics import LangevinModel
    from .gaussian import counterterm
    from .wick import WickContext

    g = _source(cfg)
    ctx = WickContext(counterterm(cfg.radius_R, cfg.cutoff_N, cfg.L_max).value, g)
    return LangevinModel(cfg.radius_R, cfg.cutoff_N, cfg.L_max, cfg.poly_spec(), ctx)


def cmd_counterterm(cfg: RunConfig, run: RunDir, threads: int = 1) -> int:
    """Table of ``c``, ``c^`` and the deviation from ``log(N)/(2 pi)``."""
    from .gaussian import counterterm, hat_counterterm
    from .sphere import default_band_limit

    def row(RN):
        R, N = RN
        L = default_band_limit(R, N)
        c = counterterm(R, N, L)
        ch = hat_counterterm(R, N, None, L)
        return [R, N, L, c.value, c.tail, c.certified, ch.value, c.value - math.log(N) / (2 * math.pi)]

    jobs = sorted((float(R), float(N)) for R in cfg.sweep_R for N in cfg.sweep_N)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        rows = list(ex.map(row, jobs))
    write_csv(
        run.file("counterterm.csv"),
        ["R", "N", "L_max", "c", "c_tail_bound", "c_certified", "c_hat", "deviation"],
        rows,
    )
    run.register("counterterm.csv")
    return EXIT_OK


def cmd_langevin(cfg: RunConfig, run: RunDir, threads: int = 1) -> int:
    """Run chains, write field snapshots, per-sample observables and a stats report."""
    from .dynamics import BlowUpError, IntegratorConfig, run_chain
    from .verify import stationarity_check

    model = _model(cfg)
    config = IntegratorConfig(
        dt=cfg.dt_time, scheme=cfg.scheme, steps=cfg.steps_count,
        burn_in=cfg.burn_in_steps, thinning=cfg.thinning_steps,
    )
    free = cfg.drift == "off"
    obs = {"mode00": lambda p: p[..., 0], "energy": model.energy}
    try:
        res = run_chain(
            model, config, initial="gaussian", lanes=cfg.chains_count, seed=cfg.seed,
            mode=cfg.mode, drift=not free, observables=obs,
        )
    except BlowUpError as exc:
        run.file("blowup.json").write_text(
            json.dumps({"error": str(exc), "diagnostics": exc.diagnostics}, indent=2, sort_keys=True) + "\n"
        )
        run.register("blowup.json")
        return EXIT_NUMERIC
    meta = {"dt": res.dt, "mode": cfg.mode, "shape": list(res.samples.shape)}
    write_snapshot(run.file("phi.snap"), res.samples, cfg.radius_R, cfg.L_max, meta)
    names = ["phi.snap", "phi.snap.json"]
    if cfg.mode == "split":
        Z, P = res.split_samples
        write_snapshot(run.file("Z.snap"), Z, cfg.radius_R, cfg.L_max, meta)
        write_snapshot(run.file("Psi.snap"), P, cfg.radius_R, cfg.L_max, meta)
        names += ["Z.snap", "Z.snap.json", "Psi.snap", "Psi.snap.json"]
    rows = []
    for i, t in enumerate(res.times):
        for lane in range(cfg.chains_count):
            rows.append([t, lane] + [res.observables[k][i, lane] for k in obs])
    write_csv(run.file("observables.csv"), ["time", "lane"] + list(obs), rows)
    report = {
        "dt": res.dt,
        "means": res.means,
        "iat": res.iat,
        "standard_errors": {k: res.standard_error(k) for k in obs} if cfg.chains_count > 1 else {},
    }
    status = EXIT_OK
    if free and res.samples.shape[0] > 1 and cfg.chains_count > 1:
        st = stationarity_check(res.samples, model.G)
        report["stationarity"] = {
            "max_abs_variance_z": float(np.max(np.abs(st.variance_z))),
            "ks_fraction": st.ks_fraction,
            "passed": st.passed,
        }
        if not st.passed:
            status = EXIT_VERDICT
    run.file("report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    run.register(*names, "observables.csv", "report.json")
    return status


def cmd_gibbs(cfg: RunConfig, run: RunDir, threads: int = 1) -> int:
    """Direct (Metropolis) sampling at small band limit."""
    from .dynamics import gibbs_sampler

    model = _model(cfg)
    res = gibbs_sampler(
        cfg.radius_R, cfg.cutoff_N, cfg.L_max, cfg.poly_spec(), model.ctx,
        draws=cfg.draws_count, lanes=cfg.chains_count, seed=cfg.seed,
    )
    write_snapshot(run.file("phi.snap"), res.samples, cfg.radius_R, cfg.L_max, {"method": res.method})
    report = {"acceptance": res.acceptance, "ess": res.ess}
    run.file("report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    run.register("phi.snap", "phi.snap.json", "report.json")
    return EXIT_OK


def _suite_rp(cfg: RunConfig) -> list[dict]:
    from .verify import (
        CylindricalFunctional, default_caps, rp_gram_gaussian, rp_mc_interacting,
    )

    R, N = cfg.radius_R, cfg.cutoff_N
    caps = default_caps(R, N)
    out = []
    for kind, status_if in (("G_R", True), ("KhatGKhat", True), ("KGK", False)):
        g = rp_gram_gaussian(caps, kind, R, N)
        ok = g.min_eig >= -1e-10
        out.append({
            "check": f"gram_{kind}", "min_eig": g.min_eig,
            "verdict": ("pass" if ok else "fail") if status_if else "observational",
        })
    fs = [CylindricalFunctional((caps[0], caps[5]), o) for o in ("one", "u1", "u2", "u1u2", "u1sq", "u2sq")]
    interacting = cfg.coupling_lambda != 0
    mc = rp_mc_interacting(
        fs, R, N, cfg.poly_spec(), cfg.band_limit_L, draws=cfg.draws_count,
        seed=cfg.seed, interacting=interacting,
    )
    out.append({
        "check": "mc_interacting" if interacting else "mc_free", "min_eig": mc.min_eig,
        "jackknife_se": mc.jackknife_se, "verdict": "pass" if mc.passed else "fail",
    })
    return out


def _suite_symmetry(cfg: RunConfig) -> list[dict]:
    from .dynamics import gibbs_sampler
    from .stereo import sphere_rotation_x2, sphere_rotation_x3
    from .verify import symmetry_check, zonal_two_point_check, two_point_pairs

    R, N, L = cfg.radius_R, cfg.cutoff_N, cfg.L_max
    zdev = zonal_two_point_check(R, N, L)
    out = [{"check": "zonal_two_point", "max_dev": zdev, "verdict": "pass" if zdev <= 1e-10 else "fail"}]
    res = gibbs_sampler(R, N, L, cfg.poly_spec(), draws=cfg.draws_count, lanes=cfg.chains_count, seed=cfg.seed)
    a = cfg.rotation_alpha
    rots = {
        "x3": lambda e: sphere_rotation_x3(e, a),
        "x2": lambda e: sphere_rotation_x2(e, a, 1.0),
    }
    rep = symmetry_check(res.samples, two_point_pairs(R, L, rots))
    for name, z in zip(rep.names, rep.z):
        out.append({"check": f"rotation_{name}", "z": float(z), "verdict": "pass" if abs(z) <= 3 else "fail"})
    return out


def _suite_uv(cfg: RunConfig) -> list[dict]:
    from .verify import uv_rate_check

    out = []
    spec = cfg.poly_spec()
    for mode in ("Y-variance", "strip", "X-norm"):
        fit = uv_rate_check(cfg.radius_R, mode, (2, 4, 8, 16), spec, cfg.kappa)
        if mode == "strip":
            ok = fit.exponent <= -0.8
        else:
            ok = fit.decreasing and fit.exponent <= 0
        out.append({
            "check": f"uv_{mode}", "values": [float(v) for v in fit.values],
            "exponent": fit.exponent, "exponent_ci": list(fit.exponent_ci),
            "verdict": "pass" if ok else "fail",
        })
    return out


def _suite_tightness(cfg: RunConfig) -> list[dict]:
    from .stereo import PlaneGrid
    from .verify import tightness_band, tightness_moments

    rows = tightness_moments(
        cfg.sweep_R, cfg.cutoff_N, cfg.kappa, cfg.poly_spec(), cfg.weight_L,
        lanes=cfg.chains_count, plane=PlaneGrid(cfg.plane_extent_S, cfg.plane_nodes_n_side), seed=cfg.seed,
    )
    width = tightness_band(rows)
    return [
        {"check": "tightness", "R": [r.R for r in rows], "estimates": [r.estimate for r in rows],
         "standard_errors": [r.standard_error for r in rows], "band": width,
         "verdict": "pass" if width <= 0.5 else "fail"}
    ]


def _suite_integrability(cfg: RunConfig) -> list[dict]:
    from .verify import integrability_check

    r = integrability_check(cfg.radius_R, cfg.cutoff_N, cfg.L_max, cfg.poly_spec(), cfg.draws_count, cfg.seed)
    return [{
        "check": "integrability", "estimate": r.estimate, "standard_error": r.standard_error,
        "hairer_steele": [r.hs_lhs, r.hs_rhs], "scale": r.scale, "heavy_tail": r.heavy_tail,
        "verdict": "pass" if r.passed else "fail",
    }]


def _suite_energy(cfg: RunConfig) -> list[dict]:
    from .stereo import PlaneGrid
    from .verify import energy_monitor

    r = energy_monitor(
        cfg.radius_R, cfg.cutoff_N, cfg.band_limit_L, cfg.poly_spec(), cfg.weight_L,
        trajectories=cfg.chains_count, plane=PlaneGrid(cfg.plane_extent_S, cfg.plane_nodes_n_side),
        kappa=cfg.kappa, seed=cfg.seed,
    )
    return [{
        "check": "energy", "C": r.C, "holds": r.holds, "control_tripped": r.control_tripped,
        "holdout_C": r.holdout_C, "holdout_fraction": r.holdout_fraction,
        "verdict": "pass" if r.holds and r.control_tripped else "fail",
    }]


SUITES = {
    "rp": _suite_rp,
    "symmetry": _suite_symmetry,
    "uv": _suite_uv,
    "tightness": _suite_tightness,
    "integrability": _suite_integrability,
    "energy": _suite_energy,
}


def cmd_verify(cfg: RunConfig, run: RunDir, threads: int = 1) -> int:
    """Run one suite; write machine-readable verdicts and a text summary."""
    results = sorted(SUITES[cfg.suite](cfg), key=lambda d: d["check"])
    run.file("verdicts.json").write_text(json.dumps({"suite": cfg.suite, "results": results}, indent=2, sort_keys=True) + "\n")
    lines = [f"{r['check']}: {r['verdict']}" for r in results]
    run.file("summary.txt").write_text("\n".join(lines) + "\n")
    run.register("verdicts.json", "summary.txt")
    print("\n".join(lines))
    return EXIT_VERDICT if any(r["verdict"] == "fail" for r in results) else EXIT_OK


def cmd_project(cfg: RunConfig, run: RunDir, threads: int = 1) -> int:
    """Push an archived sphere field to the plane; write plane snapshots, the
    measure-identity residual per field and a two-point plot."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .sphere import SpectralField
    from .stereo import PlaneGrid, measure_identity_residual, pushforward_field

    if not cfg.input_archive:
        raise UsageError("project needs input_archive")
    coeffs, head = read_snapshot(cfg.input_archive)
    R, L = head["R"], head["L_max"]
    plane = PlaneGrid(cfg.plane_extent_S, cfg.plane_nodes_n_side)
    f = pushforward_field(SpectralField(R, L, coeffs), plane)
    write_snapshot(
        run.file("plane.snap"), f.values.reshape(coeffs.shape[0], -1), R, L,
        {"S": plane.S, "n_side": plane.n_side, "source": str(cfg.input_archive)}, magic=PLANE_MAGIC,
    )
    rows = [[i, measure_identity_residual(SpectralField(R, L, c))] for i, c in enumerate(coeffs)]
    write_csv(run.file("measure_identity.csv"), ["field", "residual"], rows)
    # two-point function along the x1 axis through the origin
    mid = plane.n_side // 2
    line = f.values[:, :, mid]
    tp = np.mean(line * line[:, mid : mid + 1], axis=0)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(plane.axis, tp, lw=1.2)
    ax.set_xlabel("x1")
    ax.set_ylabel("<phi(x1, 0) phi(0, 0)>")
    fig.tight_layout()
    fig.savefig(run.file("two_point.png"), dpi=100, metadata={"Software": None})
    plt.close(fig)
    run.register("plane.snap", "plane.snap.json", "measure_identity.csv", "two_point.png")
    return EXIT_OK


COMMANDS = {
    "counterterm": cmd_counterterm,
    "langevin": cmd_langevin,
    "verify": cmd_verify,
    "project": cmd_project,
    "gibbs": cmd_gibbs,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pphi2", description="P(phi)_2 measure laboratory on spheres.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="config file (key = value) or a previous manifest.json")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    p.add_argument("--out", required=True, help="fresh output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = (t.strip() for t in item.split("=", 1))
            if k not in _PARSERS:
                raise UsageError(f"unknown key {k!r}")
            overrides[k] = _PARSERS[k](v)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        cfg = load_config(args.config, overrides)
        from .streams import spawn_seeds

        seeds = [int(s) for s in spawn_seeds(cfg.seed, cfg.chains_count)]
        run = RunDir(args.out, args.command, cfg, seeds)
    except (UsageError, ValueError) as exc:
        print(f"pphi2: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        code = COMMANDS[args.command](cfg, run, args.threads)
    except (UsageError, ValueError, OSError) as exc:
        print(f"pphi2: {exc}", file=sys.stderr)
        run.finish("usage-error")
        return EXIT_USAGE
    except (FloatingPointError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"pphi2: numerical failure: {exc}", file=sys.stderr)
        run.finish("numerical-failure")
        return EXIT_NUMERIC
    run.finish({EXIT_OK: "pass", EXIT_VERDICT: "verdict-failure", EXIT_NUMERIC: "numerical-failure"}[code])
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
