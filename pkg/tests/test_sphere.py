import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import sph_harm_y

from pphi2.sphere import (
    GridField,
    SpectralField,
    SphereGrid,
    ZonalMultiplier,
    analyze,
    apply_multiplier,
    build_multiplier,
    default_band_limit,
    degree_of_index,
    evaluate,
    geodesic_distance,
    inner_product,
    laplacian_eigenvalue,
    lm_index,
    n_coeffs,
    order_of_index,
    real_sph_harm,
    reflect_coeffs,
    synthesize,
)


def scipy_real_harmonics(L, ct, ph, R):
    """Independent oracle from scipy's complex harmonics (which carry the
    Condon-Shortley phase, removed here)."""
    th = np.arccos(ct)
    out = np.empty(ct.shape + (n_coeffs(L),))
    for l in range(L + 1):
        out[..., lm_index(l, 0)] = sph_harm_y(l, 0, th, ph).real / R
        for m in range(1, l + 1):
            y = sph_harm_y(l, m, th, ph) * (-1) ** m * math.sqrt(2) / R
            out[..., lm_index(l, m)] = y.real
            out[..., lm_index(l, -m)] = y.imag
    return out


def test_index_layout():
    assert n_coeffs(3) == 16
    assert [lm_index(1, m) for m in (-1, 0, 1)] == [1, 2, 3]
    assert lm_index(3, 3) == 15
    assert degree_of_index(2).tolist() == [0, 1, 1, 1, 2, 2, 2, 2, 2]
    assert order_of_index(1).tolist() == [0, -1, 0, 1]
    with pytest.raises(ValueError):
        lm_index(1, 2)


def test_laplacian_eigenvalue():
    assert laplacian_eigenvalue(7, 2.0) == 14.0
    with pytest.raises(ValueError):
        laplacian_eigenvalue(1, 0.0)
    with pytest.raises(ValueError):
        laplacian_eigenvalue(-1, 1.0)


def test_default_band_limit():
    assert default_band_limit(1.0, 2.0) == 8
    assert default_band_limit(0.3, 1.0) == 2


@pytest.mark.parametrize("R", [1.0, 2.5])
def test_real_harmonics_match_scipy(rng, R):
    L = 9
    ct = rng.uniform(-1, 1, 40)
    ph = rng.uniform(0, 2 * np.pi, 40)
    ours = real_sph_harm(L, ct, ph, R)
    ref = scipy_real_harmonics(L, ct, ph, R)
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_real_harmonics_scalar_and_batched_angles():
    one = real_sph_harm(4, 0.3, 1.1, 2.0)
    assert one.shape == (n_coeffs(4),)
    many = real_sph_harm(4, np.full((2, 3), 0.3), 1.1, 2.0)
    assert many.shape == (2, 3, n_coeffs(4))
    np.testing.assert_allclose(many[1, 2], one)


def test_harmonics_orthonormal_on_grid():
    R, L = 1.7, 12
    grid = SphereGrid.for_degree(R, L, 2)
    Y = real_sph_harm(L, np.repeat(grid.cos_theta, grid.n_lon), np.tile(grid.phi, grid.n_lat), R)
    G = (Y * grid.weights[:, None]).T @ Y
    np.testing.assert_allclose(G, np.eye(n_coeffs(L)), atol=1e-12)


def test_grid_weights_total_area():
    grid = SphereGrid(3.0, 5)
    assert math.isclose(grid.weights.sum(), 4 * np.pi * 9.0, rel_tol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(grid.points, axis=1), 3.0)


def test_grid_rejects_odd_or_small_longitudes():
    with pytest.raises(ValueError):
        SphereGrid(1.0, 4, 5, 9)
    with pytest.raises(ValueError):
        SphereGrid(1.0, 4, 5, 8)


@pytest.mark.parametrize("L", [4, 40])
def test_round_trip(rng, L):
    # L=40 exercises the per-order transform path
    R = 1.3
    grid = SphereGrid(R, L)
    c = rng.standard_normal(n_coeffs(L))
    back = grid.analyze(grid.synthesize(c))
    np.testing.assert_allclose(back, c, atol=1e-11)


def test_synthesize_matches_pointwise_evaluation(rng):
    R, L = 2.0, 6
    grid = SphereGrid(R, L)
    phi = SpectralField(R, L, rng.standard_normal(n_coeffs(L)))
    f = synthesize(phi, grid)
    np.testing.assert_allclose(f.values, phi(grid.points), atol=1e-12)
    np.testing.assert_allclose(analyze(f).coeffs, phi.coeffs, atol=1e-12)


def test_evaluate_batch_shape(rng):
    c = rng.standard_normal((3, 2, n_coeffs(3)))
    pts = rng.standard_normal((5, 3))
    assert evaluate(c, pts, 1.0).shape == (3, 2, 5)
    with pytest.raises(ValueError):
        evaluate(np.zeros(5), pts, 1.0)


def test_parseval_pairing(rng):
    R, L = 1.5, 5
    grid = SphereGrid.for_degree(R, L, 2)
    a = SpectralField(R, L, rng.standard_normal(n_coeffs(L)))
    b = SpectralField(R, L, rng.standard_normal(n_coeffs(L)))
    q = inner_product(synthesize(a, grid), synthesize(b, grid))
    assert math.isclose(q, a.pair(b), rel_tol=1e-12)


def test_constant_field():
    # Y_00 = 1/(R sqrt(4 pi)); the constant 1 has coefficient R sqrt(4 pi)
    R = 2.0
    c = np.zeros(n_coeffs(2))
    c[0] = R * math.sqrt(4 * math.pi)
    np.testing.assert_allclose(evaluate(c, np.eye(3) * R, R), 1.0, atol=1e-14)


def test_multipliers():
    R, N, L = 1.0, 2.0, 6
    lam = np.arange(L + 1) * (np.arange(L + 1) + 1.0)
    G = build_multiplier("G_R", R, N, L)
    K = build_multiplier("K_RN", R, N, L)
    GRN = build_multiplier("G_{R,N}", R, N, L)
    Q = build_multiplier("Q", R, N, L)
    np.testing.assert_allclose(G.values, 1 / (1 + lam))
    np.testing.assert_allclose(GRN.values, (K * G * K).values)
    np.testing.assert_allclose((GRN * Q).values, 1.0)
    assert G.expanded().shape == (n_coeffs(L),)
    assert G.truncated(2).L_max == 2
    with pytest.raises(ValueError):
        build_multiplier("nope", R, N, L)
    with pytest.raises(ValueError):
        G.truncated(9)
    with pytest.raises(ValueError):
        ZonalMultiplier(np.array([1.0, np.inf]))


def test_apply_multiplier_is_laplacian(rng):
    # (1 - Delta) G_R = 1 degree by degree
    R, L = 1.0, 4
    phi = SpectralField(R, L, rng.standard_normal(n_coeffs(L)))
    out = apply_multiplier(phi, build_multiplier("G_R", R, 1.0, L))
    l = degree_of_index(L)
    np.testing.assert_allclose(out.coeffs * (1 + l * (l + 1)), phi.coeffs)
    with pytest.raises(ValueError):
        apply_multiplier(phi, build_multiplier("G_R", R, 1.0, L + 1))


def test_spectral_field_validation():
    with pytest.raises(ValueError):
        SpectralField(1.0, 2, np.zeros(5))
    with pytest.raises(ValueError):
        SpectralField(1.0, 0, np.array([np.nan]))
    a = SpectralField.zeros(1.0, 2)
    with pytest.raises(ValueError):
        a + SpectralField.zeros(2.0, 2)
    assert not a.coeffs.flags.writeable


def test_grid_field_validation():
    with pytest.raises(ValueError):
        GridField(SphereGrid(1.0, 2), np.zeros(3))


def test_geodesic_distance():
    R = 2.0
    assert math.isclose(geodesic_distance([0, 0, R], [0, 0, -R], R), math.pi * R)
    assert math.isclose(geodesic_distance([R, 0, 0], [0, R, 0], R), math.pi * R / 2)
    with pytest.raises(ValueError):
        geodesic_distance([1, 0, 0], [0, R, 0], R)


def test_reflection_sign_and_permutation(rng):
    R, L = 1.0, 7
    grid = SphereGrid(R, L)
    c = rng.standard_normal(n_coeffs(L))
    vals = grid.synthesize(c)
    np.testing.assert_allclose(grid.synthesize(reflect_coeffs(c, L)), vals[grid.reflection_permutation], atol=1e-12)
    pts = grid.points
    np.testing.assert_allclose(pts[grid.reflection_permutation], pts * [-1, 1, 1], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.2, 5.0),
    st.integers(0, 6),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
    st.floats(0.0, 2 * np.pi),
)
def test_rotation_about_x3_preserves_degree_power(R, L, axis_vec, ang):
    # rotating the evaluation points keeps the degree-wise energy of a field
    grid = SphereGrid.for_degree(R, L, 2)
    gen = np.random.default_rng(L)
    c = gen.standard_normal(n_coeffs(L))
    ca, sa = math.cos(ang), math.sin(ang)
    rot = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    rotated = grid.analyze(evaluate(c, grid.points @ rot.T, R))
    l = degree_of_index(L)
    for k in range(L + 1):
        assert math.isclose(np.sum(rotated[l == k] ** 2), np.sum(c[l == k] ** 2), rel_tol=1e-9, abs_tol=1e-12)
