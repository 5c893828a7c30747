import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pphi2.cli import (
    RunConfig,
    UsageError,
    load_config,
    main,
    parse_config,
    read_csv,
    read_snapshot,
    sha256_file,
    write_csv,
    write_snapshot,
)
from pphi2.sphere import n_coeffs


def run(tmp_path, name, *args):
    out = tmp_path / name
    return main([*args, "--out", str(out)]), out


def test_parse_config_and_canonical_hash():
    cfg = parse_config("radius_R = 2  # comment\ncutoff_N=4\nsweep_N = 2, 4\n")
    assert cfg.radius_R == 2.0 and cfg.sweep_N == (2, 4)
    assert cfg.L_max == 32
    same = parse_config("sweep_N = 2,4\ncutoff_N = 4.0\nradius_R = 2.0\n")
    assert cfg.digest() == same.digest()
    assert cfg.digest() != RunConfig().digest()


@pytest.mark.parametrize(
    "text",
    [
        "colour = red",
        "radius_R = 1\nradius_R = 2",
        "radius_R = abc",
        "radius_R",
        "radius_R = -1",
        "plane_nodes_n_side = 100",
        "poly_degree_n = 5",
        "scheme = rk4",
        "suite = everything",
        "source_g = uniform",
        "seed = -3",
    ],
)
def test_config_rejects_bad_input(text):
    with pytest.raises(UsageError):
        parse_config(text)


def test_poly_spec_from_config():
    cfg = parse_config("poly_degree_n = 4\npoly_coeffs_a = 0, 0, 0.5, 1, 0.25\ncoupling_lambda = 2")
    spec = cfg.poly_spec()
    assert spec.coeffs == (0.0, 0.0, 0.5, 1.0, 0.25) and spec.coupling == 2.0
    with pytest.raises(UsageError):
        parse_config("poly_coeffs_a = 1, 2")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.sampled_from([1, 4, 9]))), st.floats(0.1, 10))
def test_snapshot_round_trip_is_bit_exact(tmp_path_factory, a, R):
    path = tmp_path_factory.mktemp("snap") / "x.snap"
    L = int(math.isqrt(a.shape[1])) - 1
    write_snapshot(path, a, R, L, {"note": "t"})
    back, head = read_snapshot(path)
    assert back.tobytes() == np.ascontiguousarray(a, dtype="<f8").tobytes()
    assert head["R"] == R and head["L_max"] == L and head["count"] == a.shape[0]
    assert path.stat().st_size == 64 + a.size * 8
    side = json.loads((path.parent / "x.snap.json").read_text())
    assert side["note"] == "t" and side["width"] == a.shape[1]


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.snap"
    p.write_bytes(b"x" * 80)
    with pytest.raises(ValueError):
        read_snapshot(p)
    write_snapshot(p, np.zeros((2, 4)), 1.0, 1)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_csv_round_trip_and_tamper_detection(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ["a", "b", "c"], [[1, 0.1, True], [2, float("nan"), False]])
    head, rows = read_csv(p)
    assert head == ["a", "b", "c"]
    assert rows == [["1", "0.1", "true"], ["2", "nan", "false"]]
    p.write_bytes(p.read_bytes().replace(b"0.1", b"0.2"))
    with pytest.raises(ValueError):
        read_csv(p)


def test_counterterm_command_and_rerun_from_manifest(tmp_path):
    code, out = run(tmp_path, "a", "counterterm", "--set", "sweep_N=2,4", "--set", "sweep_R=1,2")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "pass" and man["command"] == "counterterm"
    assert man["artifacts"]["counterterm.csv"] == sha256_file(out / "counterterm.csv")
    head, rows = read_csv(out / "counterterm.csv")
    assert len(rows) == 4 and head[0] == "R"
    code2, out2 = run(tmp_path, "b", "counterterm", "--config", str(out / "manifest.json"))
    assert code2 == 0
    assert (out / "counterterm.csv").read_bytes() == (out2 / "counterterm.csv").read_bytes()


def test_manifest_hash_mismatch_aborts(tmp_path):
    _, out = run(tmp_path, "a", "counterterm", "--set", "sweep_N=2", "--set", "sweep_R=1")
    man = json.loads((out / "manifest.json").read_text())
    man["config"] = man["config"].replace("radius_R = 1.0", "radius_R = 3.0")
    bad = tmp_path / "edited.json"
    bad.write_text(json.dumps(man))
    code, _ = run(tmp_path, "b", "counterterm", "--config", str(bad))
    assert code == 1


def test_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "a", "counterterm", "--set", "colour=red")[0] == 1
    assert run(tmp_path, "b", "counterterm", "--set", "noequals")[0] == 1
    assert run(tmp_path, "c", "launch")[0] == 1
    assert run(tmp_path, "d", "counterterm", "--threads", "0")[0] == 1
    assert run(tmp_path, "e", "counterterm", "--config", str(tmp_path / "missing.cfg"))[0] == 1
    full = tmp_path / "full"
    full.mkdir()
    (full / "keep.txt").write_text("x")
    assert main(["counterterm", "--out", str(full)]) == 1
    assert (full / "keep.txt").read_text() == "x"
    assert "not empty" in capsys.readouterr().err


def test_config_file_and_seed_flag(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("radius_R = 1\ncutoff_N = 2\nband_limit_L = 3\nchains_count = 8\ndraws_count = 50\n")
    code, out = run(tmp_path, "g", "gibbs", "--config", str(cfg), "--seed", "17")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert "seed = 17" in man["config"] and len(man["chain_seeds"]) == 8
    snap, head = read_snapshot(out / "phi.snap")
    assert snap.shape == (50 * 8, n_coeffs(3))
    assert load_config(str(out / "manifest.json")).seed == 17


def test_langevin_split_writes_snapshots(tmp_path):
    code, out = run(
        tmp_path, "s", "langevin", "--set", "band_limit_L=3", "--set", "mode=split",
        "--set", "steps_count=20", "--set", "thinning_steps=5", "--set", "chains_count=2",
    )
    assert code == 0
    phi, _ = read_snapshot(out / "phi.snap")
    Z, _ = read_snapshot(out / "Z.snap")
    P, _ = read_snapshot(out / "Psi.snap")
    np.testing.assert_allclose(Z + P, phi, atol=1e-12)
    head, rows = read_csv(out / "observables.csv")
    assert head == ["time", "lane", "mode00", "energy"] and len(rows) == 4 * 2


def test_langevin_free_reports_stationarity(tmp_path):
    code, out = run(
        tmp_path, "f", "langevin", "--set", "band_limit_L=2", "--set", "drift=off",
        "--set", "steps_count=600", "--set", "thinning_steps=30", "--set", "chains_count=32",
    )
    rep = json.loads((out / "report.json").read_text())
    assert "stationarity" in rep
    assert code == (0 if rep["stationarity"]["passed"] else 3)


def test_blowup_exit_code(tmp_path):
    code, out = run(
        tmp_path, "b", "langevin", "--set", "band_limit_L=3", "--set", "dt_time=0.5",
        "--set", "coupling_lambda=1000", "--set", "steps_count=50",
    )
    assert code == 2
    assert "sup_norm" in json.loads((out / "blowup.json").read_text())["diagnostics"]
    assert json.loads((out / "manifest.json").read_text())["status"] == "numerical-failure"


def test_project_is_deterministic(tmp_path):
    R, L = 1.0, 3
    c = np.zeros((2, n_coeffs(L)))
    c[0, 0] = 2.0 * R * math.sqrt(4 * math.pi)
    c[1, 5] = 0.7
    archive = tmp_path / "in.snap"
    write_snapshot(archive, c, R, L)
    args = ["project", "--set", f"input_archive={archive}", "--set", "plane_extent_S=4", "--set", "plane_nodes_n_side=32"]
    code, out = run(tmp_path, "p1", *args)
    assert code == 0
    plane, head = read_snapshot(out / "plane.snap")
    assert head["magic"] == "PPHI2PLN"
    np.testing.assert_allclose(plane[0], 2.0)
    _, rows = read_csv(out / "measure_identity.csv")
    assert all(float(r[1]) <= 1e-8 for r in rows)
    _, out2 = run(tmp_path, "p2", *args)
    for name in ("plane.snap", "measure_identity.csv", "two_point.png"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_project_needs_archive(tmp_path):
    assert run(tmp_path, "p", "project")[0] == 1


def test_verify_suite_writes_verdicts(tmp_path):
    code, out = run(tmp_path, "v", "verify", "--set", "suite=uv")
    verdicts = json.loads((out / "verdicts.json").read_text())
    checks = {r["check"]: r["verdict"] for r in verdicts["results"]}
    assert set(checks) == {"uv_Y-variance", "uv_strip", "uv_X-norm"}
    assert checks["uv_strip"] == "pass"
    assert code == (3 if "fail" in checks.values() else 0)
    assert (out / "summary.txt").read_text().count("\n") == 3
