"""Piecewise structure and minimisation of the rate function

    g(t) = (1/t) * min_{v >= alpha + mu t} v^T Sigma^{-1} v,   t > 0.

On an interval where the essential set of the inner quadratic program is a
fixed ``V`` the function is ``a/t + c2 + c t`` with

    a  = alpha_V^T Sigma_VV^{-1} alpha_V
    c2 = 2 alpha_V^T Sigma_VV^{-1} mu_V
    c  = mu_V^T Sigma_VV^{-1} mu_V.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .qp_core import MAX_DIM, PDMatrix, QpSolution, solve_qp

BREAKPOINT_RTOL = 1e-7


class CoverageGap(Exception):
    pass


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Covariance ``Sigma``, starting scale ``alpha`` and drift ``mu``.

    The target event is ``X(t) - mu t > alpha u`` componentwise for some
    ``t >= 0`` where ``X`` is a centred Brownian motion with covariance
    ``Sigma`` per unit time.
    """

    sigma: PDMatrix
    alpha: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        sigma = self.sigma if isinstance(self.sigma, PDMatrix) else PDMatrix(self.sigma)
        alpha = np.array(self.alpha, dtype=float)
        mu = np.array(self.mu, dtype=float)
        d = sigma.dim
        if alpha.shape != (d,) or mu.shape != (d,):
            raise InvalidSpec(f"alpha and mu must have shape ({d},)")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(mu))):
            raise InvalidSpec("alpha and mu must be finite")
        if not np.any((alpha > 0) & (mu > 0)):
            raise InvalidSpec("need some i with alpha_i > 0 and mu_i > 0")
        alpha.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.sigma.dim

    @classmethod
    def from_factor(cls, A, alpha, mu) -> "ProblemSpec":
        return cls(PDMatrix.from_factor(A), alpha, mu)

    @classmethod
    def from_correlation(cls, corr, scales, alpha, mu) -> "ProblemSpec":
        s = np.asarray(scales, dtype=float)
        R = np.asarray(corr, dtype=float)
        return cls(PDMatrix(R * np.outer(s, s)), alpha, mu)

    @classmethod
    def with_cone(cls, sigma, alpha, mu, cone) -> "ProblemSpec":
        """Hitting ``{x : cone @ x >= 0}`` maps to the quadrant for ``cone @ X``."""
        Mc = np.asarray(cone, dtype=float)
        if abs(np.linalg.det(Mc)) == 0.0:
            raise InvalidSpec("cone matrix is singular")
        S = sigma.entries if isinstance(sigma, PDMatrix) else np.asarray(sigma, dtype=float)
        return cls(PDMatrix(Mc @ S @ Mc.T), Mc @ np.asarray(alpha, float), Mc @ np.asarray(mu, float))

    def b(self, t: float) -> np.ndarray:
        return self.alpha + t * self.mu


@dataclass(frozen=True)
class Segment:
    """Open interval ``(lo, hi)`` on which the essential set is ``index_set``."""

    lo: float
    hi: float
    index_set: tuple[int, ...]
    coeffs: tuple[float, float, float]  # (a, c2, c)

    def value(self, t):
        a, c2, c = self.coeffs
        return a / t + c2 + c * t

    def derivative(self, t):
        a, _, c = self.coeffs
        return -a / t**2 + c

    def curvature(self, t):
        return 2.0 * self.coeffs[0] / t**3

    def stationary_point(self) -> float:
        a, _, c = self.coeffs
        if c <= 0:
            return math.inf
        if a <= 0:
            return 0.0
        return math.sqrt(a / c)

    def contains(self, t: float) -> bool:
        return self.lo <= t <= self.hi


def _coeffs(spec: ProblemSpec, idx) -> tuple[float, float, float]:
    idx = list(idx)
    al, mu = spec.alpha[idx], spec.mu[idx]
    sa = spec.sigma.solve_block(idx, al)
    sm = spec.sigma.solve_block(idx, mu)
    return float(al @ sa), float(2.0 * al @ sm), float(mu @ sm)


def _interval_for(spec: ProblemSpec, idx):
    """t-interval where ``idx`` is the essential set of the QP at ``alpha + mu t``.

    Every condition is affine in t, ``p + q t (>|>=) 0``.  Returns the
    closure ``(lo, hi)`` or ``None`` when the interior is empty.
    """
    d = spec.dim
    idx = list(idx)
    rest = [j for j in range(d) if j not in idx]
    p_lam = spec.sigma.solve_block(idx, spec.alpha[idx])
    q_lam = spec.sigma.solve_block(idx, spec.mu[idx])
    rows_p = [p_lam]
    rows_q = [q_lam]
    if rest:
        S = spec.sigma.block(rest, idx)
        rows_p.append(S @ p_lam - spec.alpha[rest])
        rows_q.append(S @ q_lam - spec.mu[rest])
    p = np.concatenate(rows_p)
    q = np.concatenate(rows_q)
    lo, hi = 0.0, math.inf
    for pi, qi in zip(p, q):
        if abs(qi) <= 1e-14 * (abs(pi) + 1.0):
            if pi < 0:
                return None
            continue
        root = -pi / qi
        if qi > 0:
            lo = max(lo, root)
        else:
            hi = min(hi, root)
    if not hi > lo * (1 + 1e-12) + 1e-15:
        return None
    return lo, hi


def compute_segments(spec: ProblemSpec) -> list[Segment]:
    """Split ``(0, inf)`` into intervals of constant essential set."""
    d = spec.dim
    if d > MAX_DIM:
        raise InvalidSpec(f"dimension {d} exceeds {MAX_DIM}")
    segs = []
    for size in range(1, d + 1):
        for idx in combinations(range(d), size):
            span = _interval_for(spec, idx)
            if span is None:
                continue
            segs.append(Segment(span[0], span[1], idx, _coeffs(spec, idx)))
    segs.sort(key=lambda s: s.lo)
    if not segs:
        raise CoverageGap("no index set is essential anywhere on (0, inf)")
    if segs[0].lo != 0.0:
        raise CoverageGap(f"first segment starts at {segs[0].lo}")
    if segs[-1].hi != math.inf:
        raise CoverageGap(f"last segment ends at {segs[-1].hi}")
    for left, right in zip(segs, segs[1:]):
        if abs(left.hi - right.lo) > 1e-9 * (1.0 + right.lo):
            kind = "overlap" if right.lo < left.hi else "gap"
            raise CoverageGap(f"{kind} between {left.hi} and {right.lo}")
    return segs


def eval_g(spec: ProblemSpec, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    return solve_qp(spec.sigma, spec.b(t)).value / t


@dataclass(frozen=True)
class GAnalysis:
    spec: ProblemSpec
    segments: list[Segment]
    t0: float
    ghat: float
    gtilde: float
    b: np.ndarray
    qp_at_t0: QpSolution
    at_breakpoint: bool
    breakpoint_margin: float  # distance from t0 to the nearest junction
    curvature_left: float
    curvature_right: float
    junction: Optional[float] = field(default=None)

    @property
    def I(self) -> tuple[int, ...]:
        return self.qp_at_t0.essential

    @property
    def K(self) -> tuple[int, ...]:
        return self.qp_at_t0.weakly_essential

    @property
    def J(self) -> tuple[int, ...]:
        return self.qp_at_t0.unessential

    @property
    def m(self) -> int:
        return len(self.I)

    @property
    def classification(self) -> str:
        if self.K:
            return "breakpoint"
        if self.J:
            return "reduced"
        return "full"

    def essential_weights(self) -> np.ndarray:
        """``Sigma_II^{-1} b_I``; strictly positive by construction."""
        return self.spec.sigma.solve_block(self.I, self.b[list(self.I)])

    def first_order_residual(self) -> float:
        I = list(self.I)
        w = self.essential_weights()
        return float(-self.spec.mu[I] @ w / self.t0 + self.b[I] @ w / (2 * self.t0**2))


def minimize_g(spec: ProblemSpec, segments: Optional[list[Segment]] = None,
               rtol: float = BREAKPOINT_RTOL) -> GAnalysis:
    segs = compute_segments(spec) if segments is None else segments
    best_t, best_val, best_k = None, math.inf, -1
    for k, s in enumerate(segs):
        t = min(max(s.stationary_point(), s.lo), s.hi)
        if t <= 0 or math.isinf(t):
            continue
        v = s.value(t)
        if v < best_val:
            best_t, best_val, best_k = t, v, k
    if best_t is None:
        raise CoverageGap("g has no finite minimiser")

    junctions = [s.hi for s in segs[:-1]]
    jk = min(range(len(junctions)), key=lambda k: abs(best_t - junctions[k]), default=None)
    tj = None if jk is None else junctions[jk]
    margin = math.inf if jk is None else abs(best_t - tj)
    at_bp = tj is not None and margin <= rtol * (1.0 + tj)

    if at_bp:
        qp = solve_qp(spec.sigma, spec.b(tj))
        a, c2, c = _coeffs(spec, qp.essential)
        t0 = math.sqrt(a / c)
        curv_l, curv_r = segs[jk].curvature(t0), segs[jk + 1].curvature(t0)
    else:
        seg = segs[best_k]
        a, c2, c = seg.coeffs
        t0 = math.sqrt(a / c)
        qp = solve_qp(spec.sigma, spec.b(t0))
        curv_l = curv_r = seg.curvature(t0)
    ghat = a / t0 + c2 + c * t0
    gtilde = 2.0 * a / t0**3
    return GAnalysis(
        spec=spec,
        segments=segs,
        t0=t0,
        ghat=ghat,
        gtilde=gtilde,
        b=spec.b(t0),
        qp_at_t0=qp,
        at_breakpoint=bool(at_bp and qp.weakly_essential),
        breakpoint_margin=margin,
        curvature_left=curv_l,
        curvature_right=curv_r,
        junction=tj if at_bp else None,
    )


def analyze(spec: ProblemSpec) -> GAnalysis:
    return minimize_g(spec, compute_segments(spec))
