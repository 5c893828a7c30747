import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import eval_legendre

from pphi2.gaussian import (
    BumpProfile,
    CutoffSpec,
    GaussianSampler,
    InsufficientBandLimit,
    apply_cutoff,
    build_bump,
    counterterm,
    hat_counterterm,
    hat_multiplier,
    required_band_limit,
    sample_free,
    trace_sum,
)
from pphi2.sphere import SpectralField, build_multiplier, degree_of_index, evaluate, n_coeffs

# frozen from an independent term-by-term loop
C_1_2_L8 = 0.12838239241411378
C_2_4_L32 = 0.17307582284498751


def brute_counterterm(R, N, L):
    s = 0.0
    for l in range(L + 1):
        lam = l * (l + 1) / R**2
        s += (2 * l + 1) / ((1 + lam) * (1 + lam / N**2) ** 2)
    return s / (4 * math.pi * R**2)


def test_counterterm_frozen_values():
    assert counterterm(1.0, 2.0).value == pytest.approx(C_1_2_L8, rel=1e-14)
    assert counterterm(2.0, 4.0).value == pytest.approx(C_2_4_L32, rel=1e-14)
    assert counterterm(1.0, 1.0, 0).value == pytest.approx(1 / (4 * math.pi), rel=1e-14)


@pytest.mark.parametrize("R,N,L", [(1.0, 2.0, 3), (0.5, 8.0, 40), (3.0, 1.5, 17)])
def test_counterterm_against_loop(R, N, L):
    assert counterterm(R, N, L).value == pytest.approx(brute_counterterm(R, N, L), rel=1e-13)


@pytest.mark.parametrize("R,N,L", [(1.0, 2.0, 8), (2.0, 4.0, 20)])
def test_tail_bound_dominates_actual_tail(R, N, L):
    far = 200_000
    l = np.arange(L + 1, far + 1, dtype=float)
    lam = l * (l + 1) / R**2
    actual = np.sum((2 * l + 1) / ((1 + lam) * (1 + lam / N**2) ** 2)) / (4 * math.pi * R**2)
    bound = counterterm(R, N, L).tail
    assert actual <= bound
    assert bound < 1.5 * actual + 1e-12


def test_certification_flag_and_strict():
    loose = counterterm(1.0, 2.0)
    assert not loose.certified
    with pytest.raises(InsufficientBandLimit):
        counterterm(1.0, 2.0, strict=True)
    L = required_band_limit(1.0, 2.0, tol=1e-6)
    assert counterterm(1.0, 2.0, L).tail <= 1e-6 < counterterm(1.0, 2.0, L - 1).tail
    assert counterterm(1.0, 2.0, L, tol=1e-6).certified


def test_counterterm_log_growth():
    dev = [counterterm(1.0, N).value - math.log(N) / (2 * math.pi) for N in (16, 32, 64, 128)]
    assert max(dev) - min(dev) < 0.05


def test_trace_sum_validation():
    with pytest.raises(ValueError):
        trace_sum(1.0, 2.0, 0.0, 4)
    with pytest.raises(ValueError):
        trace_sum(-1.0, 2.0, 1.0, 4)
    # kappa = 1 path goes through numerical quadrature
    ts = trace_sum(1.0, 2.0, 1.0, 30)
    assert ts.tail > 0 and ts.full_spectrum > ts.value


def test_bump_shape():
    h = build_bump()
    t = np.linspace(-1.2, 1.2, 2401)
    v = h(t)
    assert np.all(v[np.abs(t) <= 0.5] == 1.0)
    assert np.all(v[np.abs(t) >= 1.0] == 0.0)
    assert np.all(np.diff(v[t >= 0]) <= 1e-15)
    np.testing.assert_allclose(v, v[::-1])


def test_bump_radial_mass_by_quad():
    h = build_bump()
    mass, _ = integrate.quad(lambda r: 2 * math.pi * r * float(h(r)), 0, 1, points=[0.5], epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        build_bump(-1.0)
    assert isinstance(build_bump(2.0), BumpProfile)


@pytest.mark.parametrize("R,N", [(1.0, 2.0), (2.0, 3.0)])
def test_hat_multiplier_against_quad(R, N):
    h = build_bump()
    rn = R * N
    k = hat_multiplier(R, N, L_max=10).values
    for l in (0, 1, 4, 10):
        f = lambda t: 2 * math.pi * eval_legendre(l, math.cos(t / rn)) * rn * math.sin(t / rn) * float(h(t))
        ref, _ = integrate.quad(f, 0, 1, points=[0.5], epsabs=1e-13, limit=200)
        assert k[l] == pytest.approx(ref, abs=1e-10)


def test_hat_multiplier_flat_limit():
    # large R N: the kernel mass tends to 1 and low degrees are barely damped
    k = hat_multiplier(50.0, 4.0, L_max=2).values
    assert k[0] == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        hat_multiplier(1.0, 0.5)


def test_hat_counterterm_close_to_spectral():
    diff = hat_counterterm(1.0, 16.0).value - counterterm(1.0, 16.0).value
    assert 0.0 < diff < 0.5


def test_sampler_reproducible_and_streams_independent():
    s = GaussianSampler.free(1.0, 2.0, seed=3)
    np.testing.assert_array_equal(s.sample(4, index=1), s.sample(4, index=1))
    assert not np.allclose(s.sample(4), s.with_stream(1).sample(4))
    assert not np.allclose(s.sample(4, index=0), s.sample(4, index=1))


def test_sampler_mode_variances():
    R, N, L = 1.0, 2.0, 6
    s = GaussianSampler.free(R, N, L, seed=11)
    x = s.sample(200_000)
    target = build_multiplier("G_RN", R, N, L).expanded()
    z = (x.var(axis=0) - target) / (target * math.sqrt(2 / x.shape[0]))
    assert np.max(np.abs(z)) < 5


def test_hat_sampler_covariance():
    s = GaussianSampler.hat(1.0, 2.0, L_max=5)
    k = hat_multiplier(1.0, 2.0, L_max=5).values
    g = build_multiplier("G_R", 1.0, 2.0, 5).values
    np.testing.assert_allclose(s.covariance.values, k**2 * g)


def test_pointwise_variance_equals_counterterm():
    # for a band-limited field the pointwise variance is the truncated trace
    R, N, L = 1.0, 2.0, 8
    s = GaussianSampler.free(R, N, L, seed=1)
    pt = np.array([[0.3, -0.4, math.sqrt(0.75)]])
    v = evaluate(s.sample(100_000), pt, R)[:, 0]
    assert v.var() == pytest.approx(counterterm(R, N, L).value, rel=0.02)
    assert sample_free(s).L_max == L


def test_cutoff_application():
    R, L = 1.0, 5
    X = SpectralField(R, L, np.ones(n_coeffs(L)))
    out = apply_cutoff(X, CutoffSpec(2.0))
    l = degree_of_index(L)
    np.testing.assert_allclose(out.coeffs, 1 / (1 + l * (l + 1) / 4.0))
    conv = apply_cutoff(X, CutoffSpec(2.0, "convolution"))
    np.testing.assert_allclose(conv.coeffs, hat_multiplier(R, 2.0, L_max=L).expanded())
    with pytest.raises(ValueError):
        CutoffSpec(2.0, "sharp")
    with pytest.raises(ValueError):
        CutoffSpec(0.5)
