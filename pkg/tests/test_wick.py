import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import eval_hermitenorm

from pphi2.sphere import SpectralField, SphereGrid, n_coeffs
from pphi2.wick import (
    MAX_DEGREE,
    PolynomialSpec,
    WickContext,
    interaction_grid,
    interaction_Y,
    lower_bound_fit,
    nelson_moment_check,
    remainder_coeffs,
    remainder_rhs,
    wick_derivative,
    wick_orthogonality_check,
    wick_polynomial,
    wick_power,
)


@settings(max_examples=200, deadline=None)
@given(st.floats(-6, 6), st.integers(0, 10), st.floats(0.05, 4.0))
def test_wick_power_is_scaled_hermite(x, m, c):
    ref = c ** (m / 2) * eval_hermitenorm(m, x / math.sqrt(c))
    assert float(wick_power(x, m, c)) == pytest.approx(ref, rel=1e-9, abs=1e-9 * (1 + c ** (m / 2)))


def test_wick_power_zero_variance_is_monomial():
    x = np.linspace(-2, 2, 9)
    for m in range(7):
        np.testing.assert_allclose(wick_power(x, m, 0.0), x**m)


def test_wick_power_limits():
    with pytest.raises(ValueError):
        wick_power(1.0, MAX_DEGREE + 1, 1.0)
    with pytest.raises(ValueError):
        wick_power(1.0, -1, 1.0)
    with pytest.raises(ValueError):
        wick_power(1.0, 2, -1.0)


def test_polynomial_spec_validation():
    assert PolynomialSpec.pure(4).coeffs == (0.0, 0.0, 0.0, 0.0, 0.25)
    assert PolynomialSpec.with_lower(4, {3: 1.0}).coeffs[3] == 1.0
    with pytest.raises(ValueError):
        PolynomialSpec((0.0, 0.0, 0.5))
    with pytest.raises(ValueError):
        PolynomialSpec((0.0, 0.0, 0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        PolynomialSpec.pure(4, coupling=0.0)
    with pytest.raises(ValueError):
        PolynomialSpec.with_lower(4, {4: 1.0})


def test_derivative_matches_finite_difference():
    spec = PolynomialSpec.with_lower(6, {2: 0.3, 3: -1.0})
    tau = np.linspace(-3, 3, 13)
    h = 1e-5
    fd = (wick_polynomial(tau + h, spec, 0.7) - wick_polynomial(tau - h, spec, 0.7)) / (2 * h)
    np.testing.assert_allclose(wick_derivative(tau, spec, 0.7), fd, rtol=1e-7, atol=1e-6)


def test_remainder_coeffs_quartic():
    a = remainder_coeffs(PolynomialSpec.pure(4))
    assert a[(3, 0)] == -1 and a[(3, 1)] == -3 and a[(3, 2)] == -3
    assert all(v == 0 for k, v in a.items() if k[0] != 3)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3.0),
    st.sampled_from([4, 6, 8]), st.floats(-2, 2),
)
def test_remainder_identity(psi, z, c, n, a_low):
    # P'(psi + z, c) = psi^{n-1} - sum a_{m,l} z^{:m-l:} psi^l
    spec = PolynomialSpec.with_lower(n, {2: a_low, 3: 0.5 * a_low})
    zw = [wick_power(z, k, c) for k in range(n)]
    lhs = float(wick_derivative(psi + z, spec, c))
    rhs = psi ** (n - 1) - float(remainder_rhs(psi, zw, spec))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-8 * (1 + abs(psi) + abs(z)) ** n)


def test_lower_bound_quartic_closed_form():
    # max over s = tau^2 of -s^2/8 + 3cs/2 - 3c^2/4 is 15 c^2 / 4
    fit = lower_bound_fit(PolynomialSpec.pure(4))
    assert fit.A == pytest.approx(3.75, rel=1e-6)
    assert fit.relative_change <= 0.05


def test_lower_bound_sextic_against_optimizer():
    spec = PolynomialSpec.pure(6)
    # homogeneous spec: the constant does not depend on c, so c = 1 suffices
    res = minimize_scalar(
        lambda t: -(t**6 / 12 - float(wick_polynomial(t, spec, 1.0))), bounds=(0, 8), method="bounded",
        options={"xatol": 1e-10},
    )
    fit = lower_bound_fit(spec)
    assert fit.A == pytest.approx(-res.fun, rel=1e-6)
    with pytest.raises(ValueError):
        lower_bound_fit(spec, c_range=(0.5, 2.0))


def test_interaction_of_constant_field():
    R, L, c = 1.5, 3, 0.4
    spec = PolynomialSpec.with_lower(4, {2: 0.5}, coupling=2.0)
    a = 0.8
    coeffs = np.zeros(n_coeffs(L))
    coeffs[0] = a * R * math.sqrt(4 * math.pi)
    X = SpectralField(R, L, coeffs)
    Y = interaction_Y(X, spec, c)
    assert Y == pytest.approx(2.0 * 4 * math.pi * R**2 * float(wick_polynomial(a, spec, c)), rel=1e-12)


def test_interaction_with_source_and_batch(rng):
    R, L = 1.0, 2
    spec = PolynomialSpec.pure(4)
    grid = interaction_grid(R, L, 4)
    g = SpectralField(R, L, 0.1 * rng.standard_normal(n_coeffs(L)))
    X = rng.standard_normal((5, n_coeffs(L)))
    base = interaction_Y(X, spec, 0.2, grid=grid)
    with_g = interaction_Y(X, spec, 0.2, ctx=WickContext(0.2, g), grid=grid)
    np.testing.assert_allclose(base - with_g, (X @ g.coeffs) ** 4 / 4)
    with pytest.raises(ValueError):
        interaction_Y(X, spec, 0.2)
    with pytest.raises(ValueError):
        interaction_Y(X, spec, 0.2, grid=SphereGrid(R, L))


def test_interaction_regions_partition(rng):
    R, L, N = 1.0, 3, 2.0
    spec = PolynomialSpec.pure(4)
    grid = interaction_grid(R, L, 4)
    X = rng.standard_normal((4, n_coeffs(L)))
    parts = sum(interaction_Y(X, spec, 0.3, region=r, grid=grid, N=N) for r in ("+", "-", "strip"))
    np.testing.assert_allclose(parts, interaction_Y(X, spec, 0.3, grid=grid), rtol=1e-12)
    with pytest.raises(ValueError):
        interaction_Y(X, spec, 0.3, region="+", grid=grid)


def test_source_check_warns():
    R, L = 1.0, 2
    big = SpectralField(R, L, 10 * np.ones(n_coeffs(L)))
    with pytest.warns(RuntimeWarning):
        assert not WickContext(0.1, big).check_source(4).ok
    with pytest.raises(ValueError):
        WickContext(0.1, big).check_source(4, strict=True)
    assert WickContext(0.1).check_source(4).ok
    with pytest.raises(ValueError):
        WickContext(-1.0)


@pytest.mark.parametrize("n,m,rho", [(2, 2, 0.5), (1, 4, 0.9), (3, 3, 0.0)])
def test_orthogonality_small_run(n, m, rho):
    rep = wick_orthogonality_check(rho, n, m, draws=200_000, seed=5)
    assert not rep.flagged
    assert abs(rep.z) <= 5


def test_orthogonality_detects_wrong_target():
    rep = wick_orthogonality_check(0.5, 2, 2, draws=200_000, seed=5)
    assert abs(rep.estimate - 2 * 0.5**2 * 1.2) > 5 * rep.standard_error


def test_nelson_bound_and_negative_control():
    ok = nelson_moment_check(2, 4.0, draws=200_000, seed=1)
    assert not ok.flagged and ok.estimate < 1
    bad = nelson_moment_check(2, 4.0, draws=200_000, seed=1, inflate=10.0)
    assert bad.flagged
    with pytest.raises(ValueError):
        nelson_moment_check(2, 1.5)
