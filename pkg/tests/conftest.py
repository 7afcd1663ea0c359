"""Shared oracles and generators.

The oracles here are written directly from optimality conditions with plain
``numpy.linalg`` and do not import the package's solver.
"""
from itertools import combinations

import numpy as np
import pytest
from hypothesis import strategies as st

from conehit.g_analysis import ProblemSpec


def random_pd(rng, d, ridge=0.2):
    A = rng.normal(size=(d, d))
    S = A @ A.T + ridge * np.eye(d)
    return S / np.mean(np.diag(S))


def random_corr(rng, d, ridge=0.3):
    A = rng.normal(size=(d, d))
    S = A @ A.T + ridge * np.eye(d)
    s = np.sqrt(np.diag(S))
    return S / np.outer(s, s)


def kkt_qp(M, b, tol=1e-8):
    """Minimiser of ``x' M^{-1} x`` over ``x >= b`` by enumerating active sets.

    Returns ``(x, I, K, J)`` classified from the gradient ``M^{-1} x``.
    """
    M = np.asarray(M, float)
    b = np.asarray(b, float)
    d = b.size
    Minv = np.linalg.inv(M)
    best, best_val = None, np.inf
    for size in range(1, d + 1):
        for A in combinations(range(d), size):
            A = list(A)
            x = M[:, A] @ np.linalg.solve(M[np.ix_(A, A)], b[A])
            if np.any(x < b - 1e-10 * (1 + np.abs(b))):
                continue
            val = x @ Minv @ x
            if val < best_val:
                best, best_val = x, val
    grad = Minv @ best
    scale = np.abs(grad).max()
    I = tuple(i for i in range(d) if grad[i] > tol * scale)
    K = tuple(i for i in range(d) if i not in I and abs(best[i] - b[i]) <= tol * (1 + abs(b[i])))
    J = tuple(i for i in range(d) if i not in I and i not in K)
    return best, I, K, J


def random_spec(rng, d, mu_scale=1.0):
    """Admissible spec: correlated, at least one coordinate with alpha, mu > 0."""
    while True:
        S = random_corr(rng, d) * np.outer(*(2 * [0.5 + rng.random(d)]))
        alpha = rng.uniform(0.2, 2.0, d) * rng.choice([1, 1, -1], d)
        mu = rng.uniform(0.2, 2.0, d) * mu_scale * rng.choice([1, 1, -1], d)
        if np.any((alpha > 0) & (mu > 0)):
            return ProblemSpec(S, alpha, mu)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
