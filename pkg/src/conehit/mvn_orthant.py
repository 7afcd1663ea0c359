"""Gaussian upper-orthant probabilities and the weakly-essential correction psi."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cholesky
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .qp_core import PDMatrix

N_POINTS = 2**13
N_RANDOMIZATIONS = 16


class CovNotPD(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianVec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("mean and cov dimensions disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _chol(cov: np.ndarray, regularize: bool) -> np.ndarray:
    try:
        return cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        if not regularize:
            raise CovNotPD("covariance is not positive definite") from None
    k = cov.shape[0]
    ridge = 1e-12 * np.trace(cov) / k
    warnings.warn(f"covariance regularized with ridge {ridge:.3g}", RuntimeWarning, stacklevel=3)
    try:
        return cholesky(cov + ridge * np.eye(k), lower=True)
    except np.linalg.LinAlgError:
        raise CovNotPD("covariance is not positive semidefinite") from None


def _genz_upper(L: np.ndarray, lower: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separation-of-variables integrand for ``P(L z > lower)`` at points ``w``.

    ``w`` has shape ``(n, k - 1)``; the last variable is integrated exactly.
    """
    n = w.shape[0]
    k = L.shape[0]
    f = np.ones(n)
    y = np.zeros((n, k))
    for i in range(k):
        s = y[:, :i] @ L[i, :i]
        tail = ndtr(-(lower[i] - s) / L[i, i])
        f *= tail
        if i < k - 1:
            # inverse CDF through the upper tail keeps precision when tail is small
            u = np.clip((1.0 - w[:, i]) * tail, 1e-300, 1.0)
            y[:, i] = -ndtri(u)
    return f


def tail_prob(gv: GaussianVec, lower, n_points: int = N_POINTS,
              n_randomizations: int = N_RANDOMIZATIONS, seed: int = 0,
              regularize: bool = True) -> tuple[float, float]:
    """``P(Y > lower)`` componentwise by randomized quasi-Monte Carlo.

    Returns ``(p, err)`` where ``err`` is the standard error across the
    independent scramblings. Entries of ``lower`` may be ``-inf``.
    """
    lower = np.asarray(lower, dtype=float) - gv.mean
    if lower.shape != (gv.dim,):
        raise ValueError("lower has the wrong dimension")
    k = gv.dim
    if k == 1:
        sd = np.sqrt(gv.cov[0, 0])
        if not sd > 0:
            raise CovNotPD("variance must be positive")
        return float(ndtr(-lower[0] / sd)), 0.0
    L = _chol(gv.cov, regularize)
    root = np.random.SeedSequence(seed)
    estimates = np.empty(n_randomizations)
    for r, child in enumerate(root.spawn(n_randomizations)):
        sob = qmc.Sobol(k - 1, scramble=True, seed=np.random.default_rng(child))
        # scrambled points are left ends of dyadic cells; centre them
        w = sob.random(n_points) + 0.5 ** (sob.bits + 1)
        estimates[r] = _genz_upper(L, lower, w).mean()
    p = float(np.clip(estimates.mean(), 0.0, 1.0))
    err = float(estimates.std(ddof=1) / np.sqrt(n_randomizations))
    return p, err


class Psi:
    """``psi(x) = P(Y_K > thr * x)`` with ``Y_K ~ N(0, D_KK)``, or 1 when ``K`` is empty.

    For ``#K >= 2`` the orthant probability is evaluated once on a grid
    (common random numbers across nodes) and interpolated by a cubic spline;
    outside the grid the end values are held.
    """

    def __init__(self, D: Optional[np.ndarray], thr: Optional[np.ndarray],
                 grid_halfwidth: float = 12.0, n_grid: int = 241, seed: int = 0):
        self.D = None if D is None else np.atleast_2d(D)
        self.thr = None if thr is None else np.atleast_1d(thr)
        self._spline = None
        self.max_err = 0.0
        if self.D is not None and self.D.shape[0] >= 2:
            xs = np.linspace(-grid_halfwidth, grid_halfwidth, n_grid)
            gv = GaussianVec(np.zeros(self.D.shape[0]), self.D)
            vals, errs = zip(*(tail_prob(gv, self.thr * x, seed=seed) for x in xs))
            self._lo, self._hi = xs[0], xs[-1]
            self._spline = CubicSpline(xs, np.asarray(vals))
            self.max_err = float(max(errs))

    @property
    def trivial(self) -> bool:
        return self.D is None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.D is None:
            return np.ones_like(x)
        if self._spline is None:
            return ndtr(-self.thr[0] * x / np.sqrt(self.D[0, 0]))
        return np.clip(self._spline(np.clip(x, self._lo, self._hi)), 0.0, 1.0)


def psi_parameters(analysis) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """``(D_KK, thr)`` where ``thr = (mu_K - Sigma_KI Sigma_II^{-1} mu_I) / sqrt(t0)``."""
    K = list(analysis.K)
    if not K:
        return None, None
    I = list(analysis.I)
    sigma: PDMatrix = analysis.spec.sigma
    S_KI = sigma.block(K, I)
    D = sigma.block(K) - S_KI @ sigma.solve_block(I, S_KI.T)
    mu = analysis.spec.mu
    thr = (mu[K] - S_KI @ sigma.solve_block(I, mu[I])) / np.sqrt(analysis.t0)
    return 0.5 * (D + D.T), thr


def make_psi(analysis, seed: int = 0) -> Psi:
    D, thr = psi_parameters(analysis)
    return Psi(D, thr, seed=seed)


def psi(analysis, x, seed: int = 0):
    return make_psi(analysis, seed=seed)(x)
