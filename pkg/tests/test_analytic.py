import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from growreset.analytic import (BetaPrimeShape, beta_prime_cdf, beta_prime_mean, beta_prime_pdf,
                                default_grid, master_curve, pearson_type1_pdf, stationary_from_kernels,
                                stationary_from_params, tail_exponent)
from growreset.errors import DivergentMeanError, NonIntegrableError, ValidationError
from growreset.grid import integrate as grid_integrate
from growreset.kernels import KernelParams, constant_rates, constrain

MASTER = BetaPrimeShape(5, 3, 1.0)


def test_beta_prime_examples():
    assert beta_prime_pdf(1.0, MASTER) == pytest.approx(0.375, rel=1e-14)
    assert beta_prime_pdf(0.0, BetaPrimeShape(5, 3, 767.0)) == 0.0
    val, _ = integrate.quad(lambda x: beta_prime_pdf(x, MASTER), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_shape_validation():
    with pytest.raises(DivergentMeanError):
        BetaPrimeShape(3, 1.0)
    with pytest.raises(ValidationError):
        BetaPrimeShape(3.5, 3.0)


def test_beta_prime_mean_examples():
    assert beta_prime_mean(5, 3, 767) == pytest.approx(767)
    assert beta_prime_mean(4, 3, 10) == pytest.approx(5)
    with pytest.raises(DivergentMeanError):
        beta_prime_mean(4, 1.0, 10)


def test_master_curve_examples():
    assert master_curve(1.0) == 0.375
    assert master_curve(0.0) == 0.0
    assert master_curve(10.0) == pytest.approx(7.451e-4, rel=1e-3)
    u = np.linspace(0, 100, 1000)
    np.testing.assert_allclose(beta_prime_pdf(u, MASTER), master_curve(u), rtol=1e-13, atol=0)


@given(a=st.floats(3.5, 6.0))
def test_numerical_mean_matches_first_moment(a):
    shape = BetaPrimeShape.constrained(a, 2.0)
    m, _ = integrate.quad(lambda x: x * beta_prime_pdf(x, shape), 0, np.inf, limit=200)
    assert m == pytest.approx(2.0, rel=1e-6)


@given(a=st.floats(3.2, 8.0), mean=st.floats(0.1, 1e4), u=st.floats(0.0, 50.0))
def test_cdf_is_integral_of_pdf(a, mean, u):
    shape = BetaPrimeShape.constrained(a, mean)
    val, _ = integrate.quad(lambda x: beta_prime_pdf(x, shape), 0, u * mean, limit=200)
    assert beta_prime_cdf(u * mean, shape) == pytest.approx(val, abs=1e-8)


def test_tail_exponents():
    assert tail_exponent(MASTER) == (-4.0, 3.0)
    assert tail_exponent(BetaPrimeShape(4.7, 2.7)) == pytest.approx((-3.7, 2.7))
    assert tail_exponent(BetaPrimeShape(3.8, 1.8)) == pytest.approx((-2.8, 1.8))


def test_pearson_reduces_to_beta_prime():
    base = constrain(1.0, 1.0)
    x = np.geomspace(1e-2, 50, 300)
    ref = beta_prime_pdf(x, MASTER)
    errs = []
    for eps in (1e-3, 1e-5, 1e-7, 1e-9):
        p = KernelParams(beta=1, g=eps * base.q, K=3, b=5, q=1, mean_income=1)
        errs.append(np.max(np.abs(pearson_type1_pdf(x, p) / ref - 1)))
    assert errs[-1] < 1e-6
    assert all(e1 > e2 for e1, e2 in zip(errs, errs[1:]))


def test_pearson_normalised():
    q = 3.0
    p = KernelParams(beta=1, g=q / 2, K=3, b=5 * q, q=q, mean_income=q)
    val, _ = integrate.quad(lambda x: pearson_type1_pdf(x, p), 0, np.inf, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)
    # g > q takes the quadrature branch
    p = KernelParams(beta=1, g=2.0, K=3, b=-2.0, q=1.0, mean_income=1)
    val, _ = integrate.quad(lambda x: pearson_type1_pdf(x, p), 0, np.inf, limit=200)
    assert val == pytest.approx(1.0, abs=1e-7)


def test_pearson_errors():
    with pytest.raises(ValidationError):
        pearson_type1_pdf(1.0, KernelParams(beta=1, g=1, K=3, b=5, q=1, mean_income=1))
    with pytest.raises(NonIntegrableError):
        pearson_type1_pdf(1.0, KernelParams(beta=1, g=0.5, K=1, b=5, q=1, mean_income=1))


def test_stationary_constant_rates():
    x = np.linspace(0, 120, 12001)
    d = stationary_from_kernels(lambda x: 2.0 + 0 * x, lambda x: 0.5 + 0 * x, x)
    ref = 0.25 * np.exp(-0.25 * x)
    np.testing.assert_allclose(d.density, ref, rtol=1e-6)


def test_stationary_constrained_matches_beta_prime():
    p = constrain(0.057, 767.0)
    d = stationary_from_params(p)
    u = d.x / 767.0
    sel = (u >= 0.01) & (u <= 20)
    rel = np.abs(d.density[sel] / beta_prime_pdf(d.x[sel], BetaPrimeShape(5, 3, 767.0)) - 1)
    assert rel.max() < 1e-6
    assert grid_integrate(d.x, d.density).value == pytest.approx(1.0, abs=1e-10)


def test_stationary_with_origin_point():
    x = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 3000)])
    p = constrain(1.0, 1.0)
    d = stationary_from_params(p, x)
    assert d.density[0] == 0.0
    sel = (x > 0.01) & (x < 20)
    np.testing.assert_allclose(d.density[sel], beta_prime_pdf(x[sel], MASTER), rtol=1e-6)


@given(k=st.integers(0, 3000))
def test_stationary_anchor_invariance(k):
    p = constrain(1.0, 1.0)
    x = default_grid(1.0, 4096)
    r = p.rates()
    d0 = stationary_from_kernels(r.growth, r.reset, x)
    d1 = stationary_from_kernels(r.growth, r.reset, x, anchor=x[k])
    np.testing.assert_allclose(d1.density, d0.density, rtol=1e-8)


def test_stationary_errors():
    x = np.linspace(0, 10, 101)
    with pytest.raises(ValidationError):
        stationary_from_kernels(lambda x: x - 5, lambda x: 1 + 0 * x, x)
    with pytest.raises(ValidationError):
        stationary_from_kernels(lambda x: 1 + 0 * x, lambda x: 1 + 0 * x, x[::-1])
    with pytest.raises(ValidationError):
        stationary_from_params(constant_rates(1, 1))
