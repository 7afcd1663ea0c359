"""Exact asymptotics ``P(u) ~ C_I H_I u^{(1-m)/2} exp(-ghat u / 2)``,
the limiting law of the standardized conditional passage time, and
closed-form special cases used as oracles for the general pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq
from scipy.special import ndtr

from .g_analysis import GAnalysis, ProblemSpec, Segment, analyze
from .mvn_orthant import Psi, make_psi
from .pickands_mc import PickandsEstimate, exact_H
from .qp_core import QpSolution

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class QuadratureNotConverged(Exception):
    pass


class OutOfScope(ValueError):
    pass


class OutOfScope2D(OutOfScope):
    pass


class OutOfScopeIndependent(OutOfScope):
    pass


class OutOfScopeNegAssoc(OutOfScope):
    pass


def integrate(f: Callable, lo: float, hi: float, rtol: float = 1e-8,
              fail_rtol: float = 1e-6, max_panels: int = 4096) -> float:
    """Composite 16-point Gauss-Legendre with panel doubling."""
    def rule(n):
        edges = np.linspace(lo, hi, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        fx = np.asarray(f(x), dtype=float).reshape(n, -1)
        return float((fx * _GL_W[None, :]).sum(axis=1) @ half)

    n = 8
    prev = rule(n)
    change = math.inf
    while n < max_panels:
        n *= 2
        cur = rule(n)
        change = abs(cur - prev)
        if change <= rtol * abs(cur) or cur == prev == 0.0:
            return cur
        prev = cur
    if change <= fail_rtol * abs(prev):
        return prev
    raise QuadratureNotConverged(f"relative change {change / abs(prev):.2e} after {n} panels")


def _half_width(gtilde: float) -> float:
    return 8.0 / math.sqrt(gtilde / 2.0)


def _prefactor_norm(analysis: GAnalysis) -> float:
    """``1 / sqrt((2 pi t0)^m |Sigma_II|)``."""
    m = analysis.m
    logdet = analysis.spec.sigma.logdet_block(analysis.I)
    return math.exp(-0.5 * (m * math.log(2 * math.pi * analysis.t0) + logdet))


def CI_closed_form(analysis: GAnalysis) -> float:
    """``C_I`` when ``psi == 1``: ``2^{1-m/2} pi^{(1-m)/2} / sqrt(t0^m gtilde |Sigma_II|)``."""
    m = analysis.m
    det = math.exp(analysis.spec.sigma.logdet_block(analysis.I))
    return 2 ** (1 - m / 2) * math.pi ** ((1 - m) / 2) / math.sqrt(
        analysis.t0**m * analysis.gtilde * det)


def compute_CI(analysis: GAnalysis, psi: Optional[Psi] = None) -> float:
    """``(2 pi t0)^{-m/2} |Sigma_II|^{-1/2} int exp(-gtilde x^2 / 4) psi(x) dx``."""
    psi = make_psi(analysis) if psi is None else psi
    g = analysis.gtilde
    L = _half_width(g)
    val = integrate(lambda x: np.exp(-g * x * x / 4.0) * psi(x), -L, L)
    return _prefactor_norm(analysis) * val


@dataclass(frozen=True)
class PassageTimeLaw:
    """Limit law of ``(tau_u - t0 u) / sqrt(2 u / gtilde)`` given ``tau_u < inf``."""

    t0: float
    gtilde: float
    psi: Psi
    normalizer: float

    _LIM = 10.0

    def _density(self, x):
        return np.exp(-0.5 * x * x) * self.psi(math.sqrt(2.0 / self.gtilde) * x)

    def cdf_exact(self, s: float) -> float:
        """Single value by adaptive quadrature."""
        if s <= -self._LIM:
            return 0.0
        if s >= self._LIM:
            return 1.0
        return integrate(self._density, -self._LIM, s, rtol=1e-11) / self.normalizer

    def _table(self):
        tab = self.__dict__.get("_tab")
        if tab is None:
            n = 4000
            edges = np.linspace(-self._LIM, self._LIM, n + 1)
            half = 0.5 * (edges[1] - edges[0])
            mid = 0.5 * (edges[1:] + edges[:-1])
            x = (mid[:, None] + half * _GL_X[None, :]).ravel()
            panels = (self._density(x).reshape(n, -1) @ _GL_W) * half
            cum = np.concatenate([[0.0], np.cumsum(panels)]) / self.normalizer
            tab = CubicHermiteSpline(edges, cum, self._density(edges) / self.normalizer)
            object.__setattr__(self, "_tab", tab)
        return tab

    def cdf(self, s):
        """Vectorized CDF; exact normal when ``psi == 1``, otherwise a fine table."""
        s_arr = np.asarray(s, dtype=float)
        if self.psi.trivial:
            out = ndtr(s_arr)
        else:
            spline = self._table()
            inside = np.clip(s_arr, -self._LIM, self._LIM)
            out = np.clip(spline(inside), 0.0, 1.0)
            out = np.where(s_arr <= -self._LIM, 0.0, np.where(s_arr >= self._LIM, 1.0, out))
        return out if out.ndim else float(out)

    def ppf(self, q: float) -> float:
        return brentq(lambda s: self.cdf_exact(s) - q, -self._LIM + 1e-9, self._LIM - 1e-9, xtol=1e-12)

    def standardize(self, tau, u: float):
        return (np.asarray(tau, dtype=float) - self.t0 * u) / math.sqrt(2.0 * u / self.gtilde)


def passage_time_law(analysis: GAnalysis, psi: Optional[Psi] = None) -> PassageTimeLaw:
    psi = make_psi(analysis) if psi is None else psi
    law = PassageTimeLaw(analysis.t0, analysis.gtilde, psi, 1.0)
    Z = integrate(law._density, -PassageTimeLaw._LIM, PassageTimeLaw._LIM, rtol=1e-11)
    return replace(law, normalizer=Z)


@dataclass(frozen=True)
class AsymptoticResult:
    m: int
    ghat: float
    gtilde: float
    t0: float
    C_I: float
    H_I: Optional[PickandsEstimate]
    classification: str
    I: tuple[int, ...]
    K: tuple[int, ...]
    J: tuple[int, ...]
    exact: Optional[Callable[[float], float]] = field(default=None, compare=False)
    H_value: Optional[float] = None
    H_stderr: float = 0.0

    def __post_init__(self):
        if self.H_value is None and self.H_I is not None:
            object.__setattr__(self, "H_value", self.H_I.H)
            object.__setattr__(self, "H_stderr", self.H_I.H_stderr)

    @property
    def description(self) -> str:
        if self.classification == "reduced":
            return f"reduced to m={self.m}"
        if self.classification == "breakpoint":
            return f"breakpoint m={self.m} K={list(self.K)}"
        return f"full m={self.m}"

    def _scale(self, u):
        u = np.asarray(u, dtype=float)
        return u ** ((1 - self.m) / 2) * np.exp(-0.5 * self.ghat * u)

    def evaluate(self, u, H: Optional[float] = None):
        if self.exact is not None and H is None:
            return self.exact(u)
        H = self.H_value if H is None else H
        if H is None:
            raise ValueError("no Pickands constant available")
        return self.C_I * H * self._scale(u)

    @property
    def evaluator(self) -> Callable:
        return self.evaluate

    def band(self, u, k: float = 2.0):
        """Evaluator at ``H -/+ k * stderr``."""
        if self.H_value is None:
            raise ValueError("no Pickands constant available")
        lo = max(self.H_value - k * self.H_stderr, 0.0)
        hi = self.H_value + k * self.H_stderr
        return self.C_I * lo * self._scale(u), self.C_I * hi * self._scale(u)


def assemble(spec_or_analysis, pk: Optional[PickandsEstimate] = None,
             psi: Optional[Psi] = None) -> AsymptoticResult:
    """Combine the rate analysis, ``C_I`` and a Pickands estimate.

    When ``pk`` is omitted and ``m == 1`` the exactly known constant is used.
    """
    analysis = (spec_or_analysis if isinstance(spec_or_analysis, GAnalysis)
                else analyze(spec_or_analysis))
    CI = compute_CI(analysis, psi)
    H_value = None
    if pk is None:
        H_value = exact_H(analysis)
    return AsymptoticResult(
        m=analysis.m, ghat=analysis.ghat, gtilde=analysis.gtilde, t0=analysis.t0,
        C_I=CI, H_I=pk, classification=analysis.classification,
        I=analysis.I, K=analysis.K, J=analysis.J, H_value=H_value,
    )


# ---------------------------------------------------------------------------
# closed-form special cases


def _is_identity(S: np.ndarray) -> bool:
    return np.array_equal(S, np.eye(S.shape[0]))


def oracle_2d(spec: ProblemSpec, pk: Optional[PickandsEstimate] = None,
              rtol: float = 1e-12) -> AsymptoticResult:
    """Two coordinates, unit variances, ``mu = (1, 1)``, ``alpha_1 > alpha_2 > 0``.

    The regime is decided by ``rho`` against ``(alpha_1 + alpha_2) / (2 alpha_1)``.
    """
    S = spec.sigma.entries
    a1, a2 = spec.alpha
    if spec.dim != 2 or not np.allclose(np.diag(S), 1.0, rtol=0, atol=1e-14):
        raise OutOfScope2D("need a 2x2 correlation matrix")
    if not np.array_equal(spec.mu, [1.0, 1.0]) or not a1 > a2 > 0:
        raise OutOfScope2D("need mu = (1, 1) and alpha_1 > alpha_2 > 0")
    rho = float(S[0, 1])
    edge = (a1 + a2) / (2 * a1)
    if abs(rho - edge) <= rtol * edge:
        t0, ghat, gtilde = a1, 4 * a1, 2 / a1
        thr = (1 - rho) / math.sqrt(a1)
        sd = math.sqrt(1 - rho**2)
        psi = Psi(np.array([[sd**2]]), np.array([thr]))
        val = integrate(lambda x: np.exp(-x * x / (2 * a1)) * ndtr(-thr * x / sd),
                        -_half_width(gtilde), _half_width(gtilde))
        CI = val / math.sqrt(2 * math.pi * a1)
        return AsymptoticResult(1, ghat, gtilde, t0, CI, None, "breakpoint", (0,), (1,), (),
                                H_value=1.0)
    if rho > edge:
        t0, ghat, gtilde = a1, 4 * a1, 2 / a1
        return AsymptoticResult(1, ghat, gtilde, t0, 1.0, None, "reduced", (0,), (), (1,),
                                exact=lambda u: np.exp(-2 * a1 * np.asarray(u, float)),
                                H_value=1.0)
    q = a1**2 + a2**2 - 2 * a1 * a2 * rho
    t0 = math.sqrt(q / (2 * (1 - rho)))
    ghat = 2 / (1 + rho) * (a1 + a2 + 2 * t0)
    gtilde = 2 * t0**-3 * q / (1 - rho**2)
    CI = 1 / math.sqrt(t0**2 * math.pi * (1 - rho**2) * gtilde)
    return AsymptoticResult(2, ghat, gtilde, t0, CI, pk, "full", (0, 1), (), ())


def two_dim_breakpoint(spec: ProblemSpec) -> Optional[float]:
    """``Q = (alpha_1 rho - alpha_2) / (1 - rho)`` when positive, else ``None``."""
    a1, a2 = spec.alpha
    rho = float(spec.sigma.entries[0, 1])
    Q = (a1 * rho - a2) / (1 - rho)
    return Q if Q > 0 else None


@dataclass(frozen=True)
class IndependentStructure:
    drop_times: tuple[float, ...]  # t'_1 < ... < t'_l
    index_sets: tuple[tuple[int, ...], ...]  # I_1, ..., I_{l+1}
    p: int  # zero-based segment of the minimiser
    t0: float
    K: tuple[int, ...]


def independent_structure(spec: ProblemSpec, rtol: float = 1e-9) -> IndependentStructure:
    """Change-of-dimension instants and the selected segment for ``Sigma = Id``."""
    if not _is_identity(spec.sigma.entries):
        raise OutOfScopeIndependent("Sigma must be the identity")
    al, mu = spec.alpha, spec.mu
    if not np.all(al > 0):
        raise OutOfScopeIndependent("need alpha > 0")
    d = spec.dim
    drop = {j: al[j] / -mu[j] for j in range(d) if mu[j] < 0}
    times = sorted(set(drop.values()))
    bounds = [0.0] + times + [math.inf]
    sets = []
    for i in range(len(bounds) - 1):
        right = bounds[i + 1]
        sets.append(tuple(j for j in range(d) if mu[j] >= 0 or drop[j] >= right))
    for i, Ii in enumerate(sets):
        idx = list(Ii)
        t0i = math.sqrt(float(al[idx] @ al[idx]) / float(mu[idx] @ mu[idx]))
        lo, hi = bounds[i], bounds[i + 1]
        if lo * (1 - rtol) <= t0i < hi:
            K = ()
            if i > 0 and abs(t0i - lo) <= rtol * lo:
                K = tuple(sorted(j for j, tj in drop.items() if abs(tj - lo) <= rtol * lo))
            return IndependentStructure(tuple(times), tuple(sets), i, t0i, K)
    raise OutOfScopeIndependent("no segment contains its own minimiser")


def oracle_independent(spec: ProblemSpec, pk: Optional[PickandsEstimate] = None) -> AsymptoticResult:
    st = independent_structure(spec)
    al, mu = spec.alpha, spec.mu
    I = st.index_sets[st.p]
    idx = list(I)
    t0 = st.t0
    s_a2 = float(al[idx] @ al[idx])
    ghat = float(np.sum((al[idx] + mu[idx] * t0) ** 2)) / t0
    gtilde = 2 * s_a2 / t0**3
    K = st.K
    J = tuple(j for j in range(spec.dim) if j not in I and j not in K)
    m = len(I)

    def weight(x):
        w = np.exp(-s_a2 * x * x / (2 * t0**3))
        for i in K:
            w = w * ndtr(-mu[i] * x / math.sqrt(t0))
        return w

    L = _half_width(gtilde)
    CI = integrate(weight, -L, L) / math.sqrt((2 * math.pi * t0) ** m)
    kind = "breakpoint" if K else ("reduced" if J else "full")
    return AsymptoticResult(m, ghat, gtilde, t0, CI, pk, kind, I, K, J)


def oracle_negassoc(spec: ProblemSpec, pk: Optional[PickandsEstimate] = None) -> AsymptoticResult:
    S = spec.sigma
    idx = list(range(spec.dim))
    ia = S.solve_block(idx, spec.alpha)
    im = S.solve_block(idx, spec.mu)
    if not (np.all(ia > 0) and np.all(im > 0)):
        raise OutOfScopeNegAssoc("need Sigma^{-1} alpha > 0 and Sigma^{-1} mu > 0")
    aa = float(spec.alpha @ ia)
    t0 = math.sqrt(aa / float(spec.mu @ im))
    b = spec.alpha + t0 * spec.mu
    ghat = float(b @ S.solve_block(idx, b)) / t0
    gtilde = 2 * aa / t0**3
    d = spec.dim
    det = math.exp(S.logdet_block(idx))
    CI = (2 * math.pi) ** ((1 - d) / 2) / math.sqrt(t0 ** (d - 3) * aa * det)
    return AsymptoticResult(d, ghat, gtilde, t0, CI, pk, "full", tuple(idx), (), ())


def homogeneous_case(spec: ProblemSpec):
    """``(t0, ghat, gtilde, D)`` for ``alpha = alpha 1``, ``mu = mu 1`` or ``None``."""
    al, mu = spec.alpha, spec.mu
    if not (np.all(al == al[0]) and np.all(mu == mu[0]) and al[0] > 0 and mu[0] > 0):
        return None
    from .qp_core import solve_qp
    D = solve_qp(spec.sigma, np.ones(spec.dim)).value
    a, m_ = float(al[0]), float(mu[0])
    return a / m_, 4 * D * a * m_, 2 * D * m_**3 / a, D


def applicable_oracles(spec: ProblemSpec) -> dict[str, Callable[[ProblemSpec], AsymptoticResult]]:
    out = {}
    try:
        oracle_2d(spec)
        out["two_dim"] = oracle_2d
    except OutOfScope:
        pass
    try:
        independent_structure(spec)
        out["independent"] = oracle_independent
    except OutOfScope:
        pass
    try:
        oracle_negassoc(spec)
        out["negatively_associated"] = oracle_negassoc
    except OutOfScope:
        pass
    return out


def compare(general: AsymptoticResult, oracle: AsymptoticResult, rtol: float = 1e-8) -> list[str]:
    """Names of the fields where the oracle and the general pipeline disagree."""
    bad = []
    for name in ("I", "K", "J", "m", "classification"):
        if getattr(general, name) != getattr(oracle, name):
            bad.append(name)
    for name in ("t0", "ghat", "gtilde", "C_I"):
        g, o = getattr(general, name), getattr(oracle, name)
        if not math.isclose(g, o, rel_tol=rtol, abs_tol=0.0):
            bad.append(name)
    return bad
