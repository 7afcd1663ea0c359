import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from conehit.asymptotics import (CI_closed_form, OutOfScope2D, OutOfScopeIndependent,
                                 OutOfScopeNegAssoc, QuadratureNotConverged, applicable_oracles,
                                 assemble, compare, compute_CI, homogeneous_case,
                                 independent_structure, integrate, oracle_2d, oracle_independent,
                                 oracle_negassoc, passage_time_law, two_dim_breakpoint)
from conehit.g_analysis import ProblemSpec, analyze

from conftest import random_corr, seeds


def _negassoc_spec(rng, d):
    """``Sigma^{-1} alpha > 0`` and ``Sigma^{-1} mu > 0`` by construction."""
    S = random_corr(rng, d)
    alpha = S @ rng.uniform(0.2, 2.0, d)
    mu = S @ rng.uniform(0.2, 2.0, d)
    assume(np.any((alpha > 0) & (mu > 0)))
    return ProblemSpec(S, alpha, mu)


def _spec2(rho, alpha=(1.0, 0.5)):
    return ProblemSpec(np.array([[1.0, rho], [rho, 1.0]]), alpha, [1.0, 1.0])


@pytest.mark.parametrize("rho", np.round(np.arange(-0.95, 0.951, 0.05), 2))
def test_two_dim_oracle_agrees(rho):
    spec = _spec2(rho)
    assert compare(assemble(spec), oracle_2d(spec)) == []


def test_two_dim_regimes():
    assert oracle_2d(_spec2(0.3)).classification == "full"
    assert oracle_2d(_spec2(0.75)).classification == "breakpoint"
    assert oracle_2d(_spec2(0.8)).classification == "reduced"
    assert two_dim_breakpoint(_spec2(0.9)) == pytest.approx(4.0)
    assert two_dim_breakpoint(_spec2(0.4)) is None


def test_breakpoint_prefactor_is_one_half():
    # psi(x) + psi(-x) = 1 makes the integral half the Gaussian mass
    ar = assemble(_spec2(0.75))
    assert ar.C_I == pytest.approx(0.5, rel=1e-10)
    assert ar.H_value == 1.0


def test_reduced_case_evaluator_is_exponential():
    spec = _spec2(0.9)
    ar = assemble(spec)
    assert ar.description == "reduced to m=1"
    u = np.array([1.0, 2.5, 6.0])
    np.testing.assert_allclose(ar.evaluate(u), np.exp(-2 * u), rtol=1e-12)
    np.testing.assert_allclose(oracle_2d(spec).evaluate(u), np.exp(-2 * u), rtol=1e-15)


def test_two_dim_out_of_scope():
    with pytest.raises(OutOfScope2D):
        oracle_2d(_spec2(0.3, alpha=(0.5, 1.0)))
    with pytest.raises(OutOfScope2D):
        oracle_2d(ProblemSpec(np.array([[2.0, 0.1], [0.1, 1.0]]), [1.0, 0.5], [1.0, 1.0]))


@settings(max_examples=60, deadline=None)
@given(seed=seeds, d=st.integers(1, 5))
def test_independent_oracle_agrees(seed, d):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.2, 2.0, d)
    mu = rng.uniform(0.2, 2.0, d) * rng.choice([1, -1], d)
    assume(np.any(mu > 0))
    spec = ProblemSpec(np.eye(d), alpha, mu)
    assert compare(assemble(spec), oracle_independent(spec)) == []


def test_independent_breakpoint_case():
    spec = ProblemSpec(np.eye(3), [1.0, 1.0, 1.0], [1.0, -1.0, -2.0])
    st_ = independent_structure(spec)
    assert st_.drop_times == pytest.approx((0.5, 1.0))
    ar, o = assemble(spec), oracle_independent(spec)
    assert o.K == (1,) and o.J == (2,)
    assert compare(ar, o) == []


def test_independent_requires_identity():
    with pytest.raises(OutOfScopeIndependent):
        oracle_independent(_spec2(0.2))


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(2, 5))
def test_negatively_associated_oracle_agrees(seed, d):
    spec = _negassoc_spec(np.random.default_rng(seed), d)
    ar = assemble(spec)
    assert ar.I == tuple(range(d)) and ar.K == () and ar.J == ()
    assert compare(ar, oracle_negassoc(spec)) == []


def test_negassoc_scope():
    with pytest.raises(OutOfScopeNegAssoc):
        oracle_negassoc(_spec2(0.9))


def test_applicable_oracles_detection():
    found = applicable_oracles(ProblemSpec(np.eye(2), [1.0, 0.5], [1.0, 1.0]))
    assert set(found) == {"two_dim", "independent", "negatively_associated"}
    assert set(applicable_oracles(_spec2(0.9))) == {"two_dim"}


def test_homogeneous_case_matches_analysis():
    S = random_corr(np.random.default_rng(3), 3)
    spec = ProblemSpec(S, [0.8] * 3, [1.3] * 3)
    t0, ghat, gtilde, _ = homogeneous_case(spec)
    g = analyze(spec)
    assert (g.t0, g.ghat, g.gtilde) == pytest.approx((t0, ghat, gtilde), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d=st.integers(1, 4))
def test_quadrature_matches_closed_form_without_weakly_essential(seed, d):
    g = analyze(_negassoc_spec(np.random.default_rng(seed), d))
    assert compute_CI(g) == pytest.approx(CI_closed_form(g), rel=1e-8)


def test_integrate_gaussian_and_failure():
    assert integrate(lambda x: np.exp(-x * x), -10, 10) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    with pytest.raises(QuadratureNotConverged):
        integrate(lambda x: np.sin(1.0 / x), 0.0, 1.0, rtol=1e-12, fail_rtol=1e-12)


def test_passage_law_standard_normal_without_weakly_essential():
    g = analyze(ProblemSpec(np.eye(2), [1.0, 1.0], [1.0, 1.0]))
    law = passage_time_law(g)
    s = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(law.cdf(s), ndtr(s), atol=1e-12)
    assert law.normalizer == pytest.approx(math.sqrt(2 * math.pi), rel=1e-10)
    assert law.standardize(g.t0 * 5.0, 5.0) == 0.0


def test_passage_law_at_breakpoint_is_skewed():
    law = passage_time_law(analyze(_spec2(0.75)))
    s = np.linspace(-6, 6, 61)
    F = law.cdf(s)
    assert np.all(np.diff(F) >= 0)
    assert law.ppf(0.5) < 0
    for q in (0.1, 0.5, 0.9):
        assert law.cdf(law.ppf(q)) == pytest.approx(q, abs=1e-8)
    for x in (-2.0, 0.0, 1.5):
        assert law.cdf(x) == pytest.approx(law.cdf_exact(x), abs=1e-9)


def test_band_contains_estimate():
    g = analyze(ProblemSpec(np.eye(2), [1.0, 1.0], [1.0, 1.0]))
    ar = assemble(g)
    assert ar.H_value is None
    with pytest.raises(ValueError):
        ar.evaluate(2.0)
    from dataclasses import replace
    ar = replace(ar, H_value=1.5, H_stderr=0.1)
    lo, hi = ar.band(3.0)
    assert lo < ar.evaluate(3.0) < hi
