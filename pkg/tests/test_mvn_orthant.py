import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from conehit.g_analysis import ProblemSpec, analyze
from conehit.mvn_orthant import CovNotPD, GaussianVec, Psi, make_psi, psi_parameters, tail_prob

from conftest import random_corr, seeds


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.5, 0.9])
def test_bivariate_orthant_closed_form(rho):
    gv = GaussianVec(np.zeros(2), [[1.0, rho], [rho, 1.0]])
    p, err = tail_prob(gv, [0.0, 0.0], seed=1)
    exact = 0.25 + math.asin(rho) / (2 * math.pi)
    assert abs(p - exact) <= max(3 * err, 1e-12)
    assert abs(p - exact) < 1e-4


def test_independent_trivariate():
    p, _ = tail_prob(GaussianVec(np.zeros(3), np.eye(3)), [0.0, 0.0, 0.0])
    assert p == pytest.approx(0.125, abs=1e-10)


def test_infinite_lower_bounds_give_one():
    p, _ = tail_prob(GaussianVec(np.zeros(3), random_corr(np.random.default_rng(0), 3)),
                     [-np.inf] * 3)
    assert p == pytest.approx(1.0, abs=1e-12)


def test_univariate_exact():
    p, err = tail_prob(GaussianVec([1.0], [[4.0]]), [2.0])
    assert err == 0.0 and p == pytest.approx(ndtr(-0.5), rel=1e-14)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, k=st.integers(2, 4))
def test_against_scipy_cdf(seed, k):
    rng = np.random.default_rng(seed)
    C = random_corr(rng, k)
    mean = rng.normal(scale=0.5, size=k)
    lower = rng.normal(scale=0.7, size=k)
    p, err = tail_prob(GaussianVec(mean, C), lower, seed=seed % 1000)
    # P(Y > l) = P(-Y < -l)
    ref = multivariate_normal.cdf(-lower, mean=-mean, cov=C, abseps=1e-7, releps=1e-7)
    assert p == pytest.approx(ref, abs=max(5 * err, 5e-6))


@settings(max_examples=10, deadline=None)
@given(seed=seeds)
def test_monotone_in_lower_bound(seed):
    rng = np.random.default_rng(seed)
    gv = GaussianVec(np.zeros(3), random_corr(rng, 3))
    lo = rng.normal(size=3)
    p1, _ = tail_prob(gv, lo, seed=2)
    p2, _ = tail_prob(gv, lo + np.abs(rng.normal(size=3)), seed=2)
    assert p2 <= p1 + 1e-12


def test_seed_determinism():
    gv = GaussianVec(np.zeros(3), random_corr(np.random.default_rng(4), 3))
    assert tail_prob(gv, [0.1, -0.2, 0.3], seed=7) == tail_prob(gv, [0.1, -0.2, 0.3], seed=7)


def test_not_pd_without_regularization():
    with pytest.raises(CovNotPD):
        tail_prob(GaussianVec(np.zeros(2), [[1.0, 2.0], [2.0, 1.0]]), [0.0, 0.0],
                  regularize=False)


def test_psi_trivial_without_weakly_essential():
    g = analyze(ProblemSpec(np.eye(2), [1.0, 1.0], [1.0, 1.0]))
    assert make_psi(g).trivial
    np.testing.assert_array_equal(make_psi(g)(np.linspace(-3, 3, 7)), 1.0)


def test_psi_two_dim_breakpoint_parameters():
    rho = 0.75
    g = analyze(ProblemSpec(np.array([[1.0, rho], [rho, 1.0]]), [1.0, 0.5], [1.0, 1.0]))
    D, thr = psi_parameters(g)
    assert D[0, 0] == pytest.approx(1 - rho**2)
    assert thr[0] == pytest.approx((1 - rho) / math.sqrt(g.t0))
    f = make_psi(g)
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(f(x), ndtr(-thr[0] * x / math.sqrt(1 - rho**2)))
    assert f(0.0) == pytest.approx(0.5)


def test_psi_spline_for_two_weakly_essential():
    # independent coordinates, both drop out exactly at t0 = 1
    g = analyze(ProblemSpec(np.eye(3), [1.0, 1.0, 2.0], [1.0, -1.0, -2.0]))
    assert g.K == (1, 2)
    f = make_psi(g)
    x = np.linspace(-5, 5, 11)
    exact = ndtr(-(-1.0) * x) * ndtr(-(-2.0) * x)
    np.testing.assert_allclose(f(x), exact, atol=1e-4)
