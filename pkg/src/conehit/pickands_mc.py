"""Monte Carlo estimation of the multidimensional Pickands-type constant

    H(T) = int_{R^m} exp(a.x) P(exists t in [0, T]: W(t) > x) dx,
    H    = lim_{T -> inf} H(T) / T,

where ``W(t) = X_I(t) - mu_I t`` and ``a = Sigma_II^{-1} b_I / t0``.

For one path the inner integral over ``x`` is the weighted volume of the
union of the orthants below the visited points; after ``y = exp(a x)`` it is
the hypervolume of origin-anchored boxes divided by ``prod(a)``.

Two estimators share that reduction:

* ``crude``: average of the per-path integral. Its variance grows like
  ``exp(c T)``, so it is only usable for small ``T``.
* ``tilted``: ``exp(a.W(t_k))`` is a mean-one martingale when ``a.mu =
  a^T Sigma a / 2``. Writing the integral as ``sum_k G_k * (F / sum_j G_j)``
  and changing measure on each term gives an unbiased estimator whose
  per-path value lies in ``(0, (n + 1) / prod(a)]``. A uniformly chosen
  grid time ``t_k`` receives extra drift ``Sigma a`` on ``[0, t_k]``.

Paths are observed on a grid; sub-grids with strides 2, 4, ... reuse the
same paths, and the per-path values are combined by Richardson
extrapolation in ``sqrt(delta)`` to remove the leading discretisation bias.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cholesky

from . import _kernels
from .parallel import Welford, merge_all, run_chunks

DEFAULT_LADDER = (2.0, 4.0, 8.0, 16.0, 32.0)


class PickandsError(Exception):
    pass


class Overflow(PickandsError):
    pass


class InvalidGrid(PickandsError):
    pass


class NonConvergent(PickandsError):
    pass


@dataclass(frozen=True, eq=False)
class PickandsInput:
    sigma_II: np.ndarray
    mu_I: np.ndarray
    a: np.ndarray
    T: float
    n_steps: int
    n_paths: int
    seed: int
    method: str = "tilted"
    refine_levels: int = 3

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.sigma_II, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu_I, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if not (S.shape == (a.size, a.size) and mu.shape == a.shape):
            raise ValueError("sigma_II, mu_I and a have inconsistent shapes")
        if not np.all(a > 0):
            raise ValueError("a must be strictly positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 1:
            raise InvalidGrid("n_steps must be at least 1")
        if self.n_paths < 2:
            raise ValueError("need at least two paths")
        if self.method not in ("crude", "tilted"):
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "sigma_II", S)
        object.__setattr__(self, "mu_I", mu)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def delta(self) -> float:
        return self.T / self.n_steps

    @classmethod
    def from_analysis(cls, analysis, T: float = 32.0, n_steps: int = 1024,
                      n_paths: int = 100_000, seed: int = 0, **kw) -> "PickandsInput":
        I = list(analysis.I)
        return cls(
            sigma_II=analysis.spec.sigma.block(I),
            mu_I=analysis.spec.mu[I],
            a=analysis.essential_weights() / analysis.t0,
            T=T, n_steps=n_steps, n_paths=n_paths, seed=seed, **kw,
        )

    def drift_excess(self) -> float:
        """``a^T Sigma a / 2 - a.mu``; zero at the optimal time scale."""
        return float(0.5 * self.a @ self.sigma_II @ self.a - self.a @ self.mu_I)

    def single_time_value(self, t: float) -> float:
        """Exact ``int exp(a.x) P(W(t) > x) dx``."""
        return math.exp(t * self.drift_excess() - float(np.log(self.a).sum()))


@dataclass(frozen=True)
class GridLevel:
    delta: float
    HT: float
    stderr: float


@dataclass(frozen=True)
class PickandsEstimate:
    T: float
    HT: float  # finest observation grid
    stderr: float
    HT_continuous: Optional[float]  # grid-extrapolated to delta -> 0
    stderr_continuous: Optional[float]
    lower_bound: Optional[float]
    n_effective: int
    n_steps: int
    delta: float
    method: str
    levels: tuple[GridLevel, ...] = ()
    ladder: tuple["PickandsEstimate", ...] = ()
    monotone: Optional[bool] = None
    slope: Optional[float] = None  # (H(T) - H(T/2)) / (T/2) on the ladder
    slope_stderr: Optional[float] = None

    @property
    def value(self) -> float:
        return self.HT if self.HT_continuous is None else self.HT_continuous

    @property
    def value_stderr(self) -> float:
        return self.stderr if self.stderr_continuous is None else self.stderr_continuous

    @property
    def HT_over_T(self) -> float:
        return self.value / self.T

    @property
    def stderr_over_T(self) -> float:
        return self.value_stderr / self.T

    # the constant H itself (meaningful for ladder results)
    @property
    def H(self) -> float:
        return self.HT_over_T

    @property
    def H_stderr(self) -> float:
        return self.stderr_over_T


def weighted_lower_set_integral(points, a) -> float:
    """``int exp(a.x) 1{exists k: x < p_k} dx`` for a finite point set."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    if pts.shape[1] != a.size:
        raise ValueError("points and a disagree in dimension")
    if not np.all(a > 0):
        raise ValueError("a must be strictly positive")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    lv = _kernels.log_weighted_union(np.ascontiguousarray(pts), a)
    if lv > 709.0:
        raise Overflow(f"log integral {lv:.1f} exceeds the double range")
    return math.exp(lv)


def log_weighted_lower_set_integral(points, a) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(_kernels.log_weighted_union(np.ascontiguousarray(pts), np.asarray(a, float)))


def extrapolation_weights(hs: Sequence[float]) -> np.ndarray:
    """Weights cancelling the ``h^{1/2}, h, ...`` terms of a bias expansion."""
    r = np.sqrt(np.asarray(hs, dtype=float))
    V = np.vander(r, len(r), increasing=True).T
    rhs = np.zeros(len(r))
    rhs[0] = 1.0
    return np.linalg.solve(V, rhs)


def _strides(inp: PickandsInput) -> np.ndarray:
    levels = max(1, inp.refine_levels)
    while levels > 1 and inp.n_steps % (2 ** (levels - 1)):
        levels -= 1
    return np.array([2**i for i in range(levels)], dtype=np.int64)


def _tilt_law(inp: PickandsInput):
    """Mixture weights over grid times and the log of the estimator scale."""
    times = np.arange(inp.n_steps + 1) * inp.delta
    logc = times * inp.drift_excess()
    top = logc.max()
    c = np.exp(logc - top)
    total = c.sum()
    log_scale = top + math.log(total) - float(np.log(inp.a).sum())
    return c / total, log_scale


def _paths(rng: np.random.Generator, size: int, inp: PickandsInput, pi=None) -> np.ndarray:
    n, m = inp.n_steps, inp.m
    L = cholesky(inp.delta * inp.sigma_II, lower=True)
    inc = rng.standard_normal((size, n, m)) @ L.T
    inc -= inp.mu_I * inp.delta
    if pi is not None:
        k = rng.choice(n + 1, size=size, p=pi)
        boost = (inp.sigma_II @ inp.a) * inp.delta
        active = np.arange(1, n + 1)[None, :] <= k[:, None]
        inc += active[:, :, None] * boost
    W = np.zeros((size, n + 1, m))
    np.cumsum(inc, axis=1, out=W[:, 1:])
    return W


def _summaries(values: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return values
    return np.column_stack([values, values @ weights])


def estimate_HT(inp: PickandsInput, workers: int | None = 1,
                single_time: Optional[float] = None) -> PickandsEstimate:
    """Estimate ``H(T)`` on the grid ``t_k = k T / n_steps`` (``W(0) = 0`` included).

    With ``single_time`` the grid collapses to the single point ``{t}``, whose
    integral has the closed form ``exp(t * drift_excess) / prod(a)``.
    """
    if single_time is not None:
        return _estimate_single(inp, float(single_time), workers)
    strides = _strides(inp)
    hs = strides * inp.delta
    weights = extrapolation_weights(hs) if strides.size > 1 else None
    tilted = inp.method == "tilted"
    pi, log_scale = _tilt_law(inp) if tilted else (None, 0.0)

    def task(size, rng, _):
        W = _paths(rng, size, inp, pi)
        vals = _kernels.path_values(W, inp.a, strides, tilted, log_scale)
        if not np.all(np.isfinite(vals)):
            raise Overflow("per-path integral overflowed; reduce T or use method='tilted'")
        return Welford.of(_summaries(vals, weights))

    stats = merge_all(run_chunks(task, inp.n_paths, inp.seed, workers))
    se = stats.stderr
    levels = tuple(GridLevel(float(h), float(stats.mean[i]), float(se[i])) for i, h in enumerate(hs))
    cont = (float(stats.mean[-1]), float(se[-1])) if weights is not None else (None, None)
    return PickandsEstimate(
        T=inp.T, HT=levels[0].HT, stderr=levels[0].stderr,
        HT_continuous=cont[0], stderr_continuous=cont[1], lower_bound=None,
        n_effective=stats.n, n_steps=inp.n_steps, delta=inp.delta,
        method=inp.method, levels=levels,
    )


def _estimate_single(inp: PickandsInput, t: float, workers) -> PickandsEstimate:
    if not t > 0:
        raise InvalidGrid("single time must be positive")
    L = cholesky(t * inp.sigma_II, lower=True)

    def task(size, rng, _):
        W = rng.standard_normal((size, inp.m)) @ L.T - inp.mu_I * t
        lv = W @ inp.a - np.log(inp.a).sum()
        if lv.max() > 709.0:
            raise Overflow("single-time integral overflowed")
        return Welford.of(np.exp(lv)[:, None])

    stats = merge_all(run_chunks(task, inp.n_paths, inp.seed, workers))
    return PickandsEstimate(
        T=t, HT=float(stats.mean[0]), stderr=float(stats.stderr[0]),
        HT_continuous=None, stderr_continuous=None, lower_bound=None,
        n_effective=stats.n, n_steps=1, delta=t, method="single",
    )


def estimate_H(inp: PickandsInput, T_ladder: Sequence[float] = DEFAULT_LADDER,
               workers: int | None = 1, lower_bound: Optional[float] = None,
               strict: bool = True) -> PickandsEstimate:
    """Run ``estimate_HT`` over an increasing ``T`` ladder at fixed ``delta``.

    The returned estimate is the one at the largest ``T``; ``H`` is its
    ``HT_over_T``. ``H(T)/T`` is subadditive, so an increase beyond three
    combined standard errors between consecutive rungs raises
    ``NonConvergent`` (or is only flagged when ``strict`` is false).
    """
    ladder = [float(T) for T in T_ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("T ladder must be strictly increasing")
    delta = inp.delta
    rows = []
    for T in ladder:
        n = max(1, int(round(T / delta)))
        rows.append(estimate_HT(replace(inp, T=T, n_steps=n), workers=workers))
    monotone = True
    for lo, hi in zip(rows, rows[1:]):
        jump = hi.HT_over_T - lo.HT_over_T
        if jump > 3.0 * math.hypot(hi.stderr_over_T, lo.stderr_over_T):
            monotone = False
    if not monotone and strict:
        raise NonConvergent("H(T)/T increases along the ladder beyond Monte Carlo error")
    slope = slope_se = None
    if len(rows) >= 2 and math.isclose(rows[-2].T * 2, rows[-1].T):
        slope = (rows[-1].value - rows[-2].value) / rows[-2].T
        slope_se = math.hypot(rows[-1].value_stderr, rows[-2].value_stderr) / rows[-2].T
    last = rows[-1]
    return replace(last, ladder=tuple(rows), monotone=monotone, lower_bound=lower_bound,
                   slope=slope, slope_stderr=slope_se)


def lower_bound_H(analysis) -> float:
    """``t0^{m-1} mu_I^T Sigma_II^{-1} b_I / (16 prod (Sigma_II^{-1} b_I)_i)``."""
    I = list(analysis.I)
    w = analysis.essential_weights()
    num = analysis.t0 ** (analysis.m - 1) * float(analysis.spec.mu[I] @ w)
    return num / (16.0 * float(np.prod(w)))


def exact_H(analysis) -> Optional[float]:
    """Known value for one essential coordinate: ``mu_i`` (Brownian Pickands constant).

    With ``m = 1`` the optimal weight is ``a = 2 mu / sigma^2`` and a
    time change maps ``H`` onto the classical constant ``1`` scaled by ``mu``.
    Returns ``None`` when ``m > 1``.
    """
    if analysis.m != 1:
        return None
    return float(analysis.spec.mu[analysis.I[0]])
