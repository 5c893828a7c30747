import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import eval_legendre

from pphi2.gaussian import GaussianSampler
from pphi2.sphere import GridField, SpectralField, SphereGrid, build_multiplier, evaluate, n_coeffs, reflect_coeffs
from pphi2.stereo import PlaneField, PlaneGrid, j_R, sphere_rotation_x3, weight_w
from pphi2.verify import (
    CATALOG_VERSION,
    Cap,
    CylindricalFunctional,
    HalfSphereRegion,
    TightnessRow,
    covariance_symbols,
    default_caps,
    energy_monitor,
    hairer_steele,
    integrability_check,
    plane_source,
    reflect_field,
    rp_gram_gaussian,
    rp_mc_interacting,
    stationarity_check,
    strip_variance,
    symmetry_check,
    tightness_band,
    tightness_moments,
    two_point_pairs,
    uv_rate_check,
    x_norm_distance,
    y_variance_exact,
    y_variance_mc,
    zonal_two_point_check,
)
from pphi2.wick import PolynomialSpec

QUARTIC = PolynomialSpec.pure(4)


def test_catalog_version_pinned():
    assert CATALOG_VERSION == "1"


def test_cap_legendre_profile_against_quad():
    cap = Cap((1.0, 0.2, 0.1), 0.5)
    beta = cap.legendre_profile(12)
    c = math.cos(0.5)
    for l in (0, 3, 12):
        ref, _ = integrate.quad(lambda t: 2 * math.pi * float(cap.profile(t)) * eval_legendre(l, t), c, 1, epsabs=1e-14)
        assert beta[l] == pytest.approx(ref, abs=1e-12)


def test_cap_coefficients_reconstruct_cap():
    # the power-6 profile is C^5, so the series converges fast
    R, L = 2.0, 40
    cap = Cap((0.8, 0.3, 0.5), 0.6)
    grid = SphereGrid(R, L)
    err = np.max(np.abs(grid.synthesize(cap.coeffs(R, L)) - cap(grid.points, R)))
    assert err < 5e-4


def test_cap_coefficients_match_grid_analysis():
    R, L = 1.0, 6
    cap = Cap((0.6, -0.2, 0.7), 0.7)
    fine = SphereGrid(R, L, 400, 800)
    np.testing.assert_allclose(fine.analyze(cap(fine.points, R), L), cap.coeffs(R, L), atol=1e-7)


def test_cap_reflection_and_rotation():
    R, L = 1.0, 8
    cap = Cap((0.6, -0.2, 0.7), 0.4)
    np.testing.assert_allclose(cap.reflected().coeffs(R, L), reflect_coeffs(cap.coeffs(R, L), L), atol=1e-13)
    rot = cap.rotated(lambda e: sphere_rotation_x3(e, 0.3))
    pts = SphereGrid(R, 4).points
    np.testing.assert_allclose(rot(pts, R), cap(sphere_rotation_x3(pts, -0.3), R), atol=1e-13)
    with pytest.raises(ValueError):
        Cap((1, 0, 0), 4.0)


def test_default_caps_supported_in_positive_half():
    R, N = 1.0, 2.0
    grid = SphereGrid(R, 30)
    region = HalfSphereRegion(+1, 1 / N)
    for cap in default_caps(R, N):
        assert region.verify(cap, grid)
    assert not region.verify(Cap((1, 0, 0), 1.2), grid)
    assert not HalfSphereRegion(-1, 1 / N).verify(default_caps(R, N)[0], grid)


def test_cylindrical_functional_and_catalog():
    caps = tuple(default_caps()[:2])
    F = CylindricalFunctional(caps, "u1u2")
    X = np.random.default_rng(0).standard_normal((3, n_coeffs(4)))
    u = X @ np.stack([c.coeffs(1.0, 4) for c in caps], axis=-1)
    np.testing.assert_allclose(F.evaluate(X, 1.0, 4), u[:, 0] * u[:, 1])
    with pytest.raises(ValueError):
        CylindricalFunctional(caps, "cube")


def test_reflect_field_variants():
    R, L = 1.0, 3
    phi = SpectralField(R, L, np.arange(n_coeffs(L), dtype=float))
    grid = SphereGrid(R, L)
    gf = GridField(grid, grid.synthesize(phi.coeffs))
    a = reflect_field(phi)
    b = reflect_field(gf)
    np.testing.assert_allclose(grid.synthesize(a.coeffs), b.values, atol=1e-12)
    plane = PlaneGrid(2.0, 8)
    pf = PlaneField(plane, np.arange(64.0).reshape(8, 8))
    assert reflect_field(pf, "plane").values[1, 0] == pf.values[7, 0]
    with pytest.raises(TypeError):
        reflect_field(pf)
    with pytest.raises(TypeError):
        reflect_field(phi, "plane")


def brute_gram(caps, symbols, R, L):
    # direct spectral route: <Theta f_i, C f_j> = sum_lm c_l (Theta f_i)_lm (f_j)_lm
    C = np.repeat(symbols[: L + 1], 2 * np.arange(L + 1) + 1)
    F = np.array([c.coeffs(R, L) for c in caps])
    return (reflect_coeffs(F, L) * C) @ F.T


@pytest.mark.parametrize("kind", ["G_R", "KhatGKhat", "KGK"])
def test_gram_matches_spectral_route(kind):
    R, N, L = 1.0, 2.0, 48
    caps = default_caps(R, N, 4)
    sym = covariance_symbols(kind, R, N, L)
    rep = rp_gram_gaussian(caps, build_multiplier("G_R", R, N, L) if kind == "G_R" else _zm(sym), R, N)
    np.testing.assert_allclose(rep.matrix, brute_gram(caps, sym, R, L), atol=1e-13)


def _zm(values):
    from pphi2.sphere import ZonalMultiplier

    return ZonalMultiplier(values)


@pytest.mark.parametrize("kind", ["G_R", "KhatGKhat"])
def test_gram_positive_for_reflection_positive_covariances(kind):
    rep = rp_gram_gaussian(default_caps(), kind)
    assert rep.min_eig >= -1e-10
    assert rep.change < 1e-14


def test_gram_rejects_cap_outside_half():
    with pytest.raises(ValueError):
        rp_gram_gaussian([Cap((1, 0, 0), 1.3)], "G_R")
    with pytest.raises(ValueError):
        covariance_symbols("K", 1.0, 2.0, 4)


def test_zonal_two_point_identity():
    assert zonal_two_point_check(1.0, 2.0, 8) <= 1e-10
    assert zonal_two_point_check(3.0, 1.5, 20) <= 1e-10


def _rp_functionals():
    caps = default_caps()
    return [CylindricalFunctional((caps[0], caps[5]), o) for o in ("one", "u1", "u2", "u1u2", "u1sq", "u2sq")]


def test_interacting_mc_gram_small_run():
    rep = rp_mc_interacting(_rp_functionals(), draws=20_000, seed=1)
    assert rep.passed
    assert rep.ess > 1000 and rep.matrix.shape == (6, 6)
    np.testing.assert_allclose(rep.matrix, rep.matrix.conj().T)


def test_interacting_mc_negative_control_detected():
    rep = rp_mc_interacting(_rp_functionals(), draws=20_000, seed=1, interacting=False, control_beta=0.3)
    assert not rep.passed


def test_symmetry_check_on_invariant_and_biased_laws():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((400, 16, 4))
    same = lambda x: x[..., 0] ** 2
    swap = lambda x: x[..., 1] ** 2
    biased = lambda x: 1.3 * x[..., 1] ** 2
    rep = symmetry_check(S, [("swap", same, swap), ("biased", same, biased), ("id", same, same)])
    assert abs(rep.z[0]) <= 4 and abs(rep.z[1]) > 10 and rep.z[2] == 0
    with pytest.raises(ValueError):
        symmetry_check(S[:, :1], [("swap", same, swap)])
    slow = np.cumsum(S, axis=0)
    with pytest.raises(RuntimeError):
        symmetry_check(slow, [("swap", same, swap)])


def test_two_point_pairs_identity_rotation_gives_zero():
    S = GaussianSampler.free(1.0, 2.0, 3, seed=0).sample(400).reshape(100, 4, -1)
    rep = symmetry_check(S, two_point_pairs(1.0, 3, {"id": lambda e: e}))
    # only roundoff from renormalizing the cap centres remains
    np.testing.assert_allclose(rep.differences, 0.0, atol=1e-12)


def test_y_variance_exact_against_monte_carlo():
    R, N, M, L = 1.0, 2.0, 4.0, 6
    exact = y_variance_exact(R, QUARTIC, N, M, L)
    mean, se = y_variance_mc(R, QUARTIC, N, M, L, draws=40_000, seed=2)
    assert abs(mean - exact) <= 4 * se
    assert y_variance_exact(R, QUARTIC, N, N, L) == 0.0


def test_y_variance_scales_with_coupling_squared():
    a = y_variance_exact(1.0, PolynomialSpec.pure(4, 2.0), 2.0, 4.0, 8)
    b = y_variance_exact(1.0, QUARTIC, 2.0, 4.0, 8)
    assert a == pytest.approx(4 * b, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_x_norm_distance_monotone_in_kappa(k1, k2):
    lo, hi = sorted((k1, k2))
    assert x_norm_distance(1.0, 2.0, 4.0, hi) <= x_norm_distance(1.0, 2.0, 4.0, lo)


def test_x_norm_distance_zero_for_equal_cutoffs():
    assert x_norm_distance(1.0, 3.0, 3.0) == 0.0


def test_strip_variance_rate():
    fit = uv_rate_check(1.0, "strip")
    assert fit.decreasing and fit.exponent <= -0.8
    assert strip_variance(1.0, QUARTIC, 2.0) > 0
    with pytest.raises(ValueError):
        uv_rate_check(1.0, "other")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=40))
def test_hairer_steele_inequality(F):
    lhs, rhs = hairer_steele(F)
    assert lhs <= rhs * (1 + 1e-12)


def test_hairer_steele_two_point_toy():
    a, b = 0.3, 1.1
    lhs, rhs = hairer_steele([a, b])
    assert lhs == pytest.approx((math.exp(a) + math.exp(b)) / 2)
    assert rhs == pytest.approx(math.exp((a * math.exp(a) + b * math.exp(b)) / (math.exp(a) + math.exp(b))))
    assert hairer_steele(np.zeros(5)) == pytest.approx((1.0, 1.0))


def test_plane_source_pulls_back_to_profile():
    R, L = 1.0, 24
    g = plane_source(R, L)
    x = np.array([[0.0, 0.0], [0.5, 0.3], [1.0, -1.0]])
    got = weight_w(x, R) * evaluate(g, j_R(x, R), R)
    np.testing.assert_allclose(got, np.exp(-0.5 * np.sum(x * x, axis=1)), atol=1e-5)


def test_integrability_small_run():
    rep = integrability_check(draws=20_000, pilot=10_000)
    assert rep.passed and not rep.heavy_tail
    assert rep.hs_rhs <= 2
    zero = integrability_check(draws=5_000, scale=0.0)
    assert zero.estimate == pytest.approx(1.0) and zero.standard_error < 1e-15


def test_stationarity_check_exact_and_scaled():
    G = build_multiplier("G_RN", 1.0, 2.0, 3)
    S = GaussianSampler(1.0, G, seed=4).sample(4000).reshape(100, 40, -1)
    good = stationarity_check(S, G)
    assert good.passed
    bad = stationarity_check(1.2 * S, G)
    assert not bad.passed


def test_tightness_band_and_small_run():
    rows = [TightnessRow(1, 1.0, 0.1, 10), TightnessRow(2, 1.5, 0.1, 10), TightnessRow(4, 2.0, 0.1, 10)]
    assert tightness_band(rows) == pytest.approx(2 / 3)
    out = tightness_moments((1,), lanes=4, time_span=0.3, burn_in_time=0.1, sample_every=0.05, plane=PlaneGrid(8.0, 64))
    assert out[0].samples == 20 and out[0].estimate > 0


def test_energy_monitor_small_run():
    rep = energy_monitor(
        R=2.0, N=1.0, L_max=4, trajectories=2, fit_count=1, time_span=0.05, sample_every=1,
        plane=PlaneGrid(8.0, 64),
    )
    assert rep.holds and rep.control_tripped
    assert len(rep.ledgers) == 2 and rep.C >= 0
