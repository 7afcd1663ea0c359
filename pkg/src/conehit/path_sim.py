"""Direct simulation of ``P(u) = P(exists t >= 0: X(t) - mu t > alpha u)``.

``X`` is a driftless Brownian motion with covariance ``Sigma`` observed on
the grid ``t_k = k * delta``, truncated at ``horizon_factor * t0 * u``.
The hit test is strict and componentwise.

In tilted mode ``X`` receives the extra drift ``b_tilde / t0`` until it
hits (or until ``tilt_until``, a time, when given); the path then heads for
``b_tilde u`` at time ``t0 u``, the most likely exit point. With
``theta = Sigma^{-1} b_tilde / t0`` and ``s`` the end of the tilt window the
likelihood ratio is

    exp(-theta . X(tau ^ s) + (tau ^ s) theta' Sigma theta / 2).

Because ``theta' Sigma theta / 2 = theta . mu`` at the optimal time scale,
an untruncated window gives ``exp(-theta . (X(tau) - mu tau))``, which is
at most ``exp(-u theta . alpha)`` on the hit event.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .asymptotics import AsymptoticResult, PassageTimeLaw
from .g_analysis import GAnalysis, ProblemSpec, analyze
from .parallel import run_chunks

BLOCK = 256
MIN_ESS = 50.0
MIN_HITS = 200


class SimError(Exception):
    pass


class InvalidConfig(SimError, ValueError):
    pass


class EffectiveSampleTooSmall(SimError):
    pass


class TooFewHits(SimError):
    pass


@dataclass(frozen=True)
class SimConfig:
    u: float
    horizon_factor: float = 3.0
    n_steps_per_unit: int = 64
    n_paths: int = 100_000
    seed: int = 0
    mode: str = "tilted"
    horizon: Optional[float] = None  # absolute horizon; overrides the factor
    tilt_until: Optional[float] = None  # end of the tilt window; default: whole horizon

    def __post_init__(self):
        if not (math.isfinite(self.u) and self.u > 0):
            raise InvalidConfig("u must be positive")
        if not self.horizon_factor >= 2:
            raise InvalidConfig("horizon_factor must be at least 2")
        if self.n_steps_per_unit < 1:
            raise InvalidConfig("n_steps_per_unit must be at least 1")
        if self.n_paths < 1:
            raise InvalidConfig("n_paths must be at least 1")
        if self.mode not in ("crude", "tilted"):
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if self.horizon is not None and not self.horizon > 0:
            raise InvalidConfig("horizon must be positive")
        if self.tilt_until is not None and not self.tilt_until > 0:
            raise InvalidConfig("tilt_until must be positive")

    @property
    def delta(self) -> float:
        return 1.0 / self.n_steps_per_unit


@dataclass(frozen=True, eq=False)
class SimEstimate:
    p_hat: float
    stderr: float
    n_hits: int
    passage_samples: np.ndarray
    weights: np.ndarray  # likelihood ratios of the hitting paths (ones in crude mode)
    ess: float
    horizon: float
    delta: float
    mode: str
    ks_vs_limit: Optional[float] = None
    raw: Optional[dict] = field(default=None, repr=False)

    def write_raw_csv(self, path) -> None:
        """Columns ``path_id, hit, tau, log_likelihood_ratio``; ``tau`` empty without a hit."""
        if self.raw is None:
            raise ValueError("simulation was run without keep_raw")
        hit, tau, llr = self.raw["hit"], self.raw["tau"], self.raw["llr"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "hit", "tau", "log_likelihood_ratio"])
            for i in range(hit.size):
                w.writerow([i, int(hit[i]), repr(float(tau[i])) if hit[i] else "",
                            repr(float(llr[i])) if hit[i] else ""])


def _tilt(analysis: GAnalysis) -> np.ndarray:
    """``theta = Sigma^{-1} b_tilde / t0``; zero outside the essential set."""
    theta = np.zeros(analysis.spec.dim)
    theta[list(analysis.I)] = analysis.essential_weights() / analysis.t0
    return theta


def _simulate_chunk(size, rng, L, mu, target, delta, n_steps, drift, theta, k_tilt):
    """Hit indices (``-1`` for none) and log likelihood ratios for one chunk."""
    d = mu.size
    hit = np.full(size, -1, dtype=np.int64)
    llr = np.zeros(size)
    cur = np.zeros((size, d))
    x_tilt = np.zeros((size, d))
    alive = np.arange(size)
    tilted = drift is not None
    sts = 0.5 * float(theta @ (L @ L.T) @ theta) / delta if tilted else 0.0
    start = 0
    while start < n_steps and alive.size:
        nb = min(BLOCK, n_steps - start)
        inc = rng.standard_normal((alive.size, nb, d)) @ L.T
        if tilted and start < k_tilt:
            nt = min(nb, k_tilt - start)
            inc[:, :nt] += drift
        X = np.cumsum(inc, axis=1)
        X += cur[alive][:, None, :]
        steps = np.arange(start + 1, start + nb + 1)
        mu_t = steps[:, None] * delta * mu[None, :]
        idx = _kernels.first_hits(X, mu_t, target, start + 1)
        if tilted and start < k_tilt <= start + nb:
            x_tilt[alive] = X[:, k_tilt - start - 1]
        got = (idx >= 0) & (hit[alive] < 0)
        if got.any():
            gp = alive[got]
            k = idx[got]
            hit[gp] = k
            if tilted:
                x_eff = np.where((k <= k_tilt)[:, None], X[got, k - start - 1], x_tilt[gp])
                llr[gp] = -x_eff @ theta + np.minimum(k, k_tilt) * delta * sts
        cur[alive] = X[:, -1]
        if tilted:
            alive = alive[~got]
        start += nb
    return hit, llr


def simulate_P(spec: ProblemSpec, cfg: SimConfig, analysis: Optional[GAnalysis] = None,
               workers: int | None = 1, keep_raw: bool = False,
               law: Optional[PassageTimeLaw] = None) -> SimEstimate:
    """Estimate ``P(u)`` by crude or exponentially tilted simulation."""
    analysis = analyze(spec) if analysis is None else analysis
    delta = cfg.delta
    horizon = cfg.horizon if cfg.horizon is not None else cfg.horizon_factor * analysis.t0 * cfg.u
    n_steps = max(1, int(math.ceil(horizon / delta - 1e-9)))
    L = math.sqrt(delta) * spec.sigma.chol
    mu = spec.mu
    target = spec.alpha * cfg.u
    tilted = cfg.mode == "tilted"
    theta = _tilt(analysis) if tilted else np.zeros(spec.dim)
    drift = (spec.sigma.entries @ theta) * delta if tilted else None
    k_tilt = 0
    if tilted:
        k_tilt = n_steps if cfg.tilt_until is None else min(
            n_steps, max(1, int(math.floor(cfg.tilt_until / delta + 1e-9))))
    # keep paths alive after a hit only in crude mode, so that the noise of a
    # path does not depend on u (coupling across u with a fixed horizon)
    parts = run_chunks(
        lambda size, rng, _: _simulate_chunk(size, rng, L, mu, target, delta, n_steps,
                                             drift, theta, k_tilt),
        cfg.n_paths, cfg.seed, workers)
    hit_idx = np.concatenate([p[0] for p in parts])
    llr = np.concatenate([p[1] for p in parts])
    hit = hit_idx >= 0
    vals = np.where(hit, np.exp(llr), 0.0)
    n = vals.size
    p_hat = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    w = vals[hit]
    tau = hit_idx[hit] * delta
    ess = float(w.sum() ** 2 / (w @ w)) if w.size else 0.0
    if tilted and ess < MIN_ESS:
        raise EffectiveSampleTooSmall(f"effective sample size {ess:.1f} below {MIN_ESS:.0f}")
    est = SimEstimate(
        p_hat=min(max(p_hat, 0.0), 1.0) if not tilted else p_hat, stderr=stderr,
        n_hits=int(hit.sum()), passage_samples=tau, weights=w, ess=ess,
        horizon=n_steps * delta, delta=delta, mode=cfg.mode,
        raw={"hit": hit, "tau": hit_idx * delta, "llr": llr} if keep_raw else None,
    )
    if law is not None and est.n_hits:
        ks = weighted_ks(law.standardize(tau, cfg.u), w, law.cdf)
        est = replace(est, ks_vs_limit=ks)
    return est


def weighted_ks(x, w, cdf) -> float:
    """``sup |F_w - F|`` for the weighted empirical distribution of ``x``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order] / w.sum()
    # merge ties so that the jump happens once
    uniq, first = np.unique(xs, return_index=True)
    cum = np.cumsum(ws)
    last = np.append(first[1:], xs.size) - 1
    upper = cum[last]
    lower = np.append(0.0, upper[:-1])
    F = np.asarray(cdf(uniq), dtype=float)
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(lower - F))))


def ks_critical(n: float, level: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value ``sqrt(-log(level/2)/2) / sqrt(n)``."""
    return math.sqrt(-0.5 * math.log(level / 2.0)) / math.sqrt(n)


@dataclass(frozen=True)
class Theorem1Row:
    u: float
    p_hat: float
    stderr: float
    P_asym: float
    ratio: float
    ratio_stderr: float


@dataclass(frozen=True)
class Theorem1Report:
    rows: tuple[Theorem1Row, ...]
    band: tuple[float, float]
    passed: bool
    trend_toward_one: bool


def validate_theorem1(spec: ProblemSpec, ar: AsymptoticResult, u_ladder: Sequence[float],
                      base: Optional[SimConfig] = None, workers: int | None = 1,
                      band: tuple[float, float] = (0.8, 1.25),
                      analysis: Optional[GAnalysis] = None) -> Theorem1Report:
    """Compare simulated ``P(u)`` with the asymptotic evaluator over a ``u`` ladder.

    ``passed`` requires the last ratio inside ``band``; ``trend_toward_one``
    requires ``|ratio - 1|`` to be nonincreasing up to two standard errors.
    """
    base = SimConfig(u=1.0) if base is None else base
    analysis = analyze(spec) if analysis is None else analysis
    rows = []
    for u in u_ladder:
        est = simulate_P(spec, replace(base, u=float(u)), analysis=analysis, workers=workers)
        P = float(ar.evaluate(float(u)))
        rows.append(Theorem1Row(float(u), est.p_hat, est.stderr, P, est.p_hat / P, est.stderr / P))
    last = rows[-1]
    passed = band[0] <= last.ratio <= band[1]
    trend = all(abs(b.ratio - 1) <= abs(a.ratio - 1) + 2 * math.hypot(a.ratio_stderr, b.ratio_stderr)
                for a, b in zip(rows, rows[1:]))
    return Theorem1Report(tuple(rows), band, passed, trend)


def validate_theorem2(spec: ProblemSpec, law: PassageTimeLaw, cfg: SimConfig,
                      workers: int | None = 1, analysis: Optional[GAnalysis] = None,
                      standardize: bool = True) -> tuple[float, int]:
    """Weighted KS distance between standardized passage times and ``law``.

    ``standardize=False`` compares raw passage times (a negative control).
    """
    est = simulate_P(spec, cfg, analysis=analysis, workers=workers)
    if est.n_hits < MIN_HITS:
        raise TooFewHits(f"{est.n_hits} hits, need {MIN_HITS}")
    x = law.standardize(est.passage_samples, cfg.u) if standardize else est.passage_samples
    return weighted_ks(x, est.weights, law.cdf), est.n_hits
