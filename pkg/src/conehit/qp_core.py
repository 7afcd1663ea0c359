"""Quadratic program ``min x^T M^{-1} x  s.t.  x >= b`` with index classification.

The optimizer is characterised by the support ``I`` of its Lagrange
multiplier: ``x_I = b_I``, ``M_II^{-1} b_I > 0`` and the remaining
coordinates follow from ``x_{I^c} = M_{I^c I} M_II^{-1} b_I >= b_{I^c}``.
Coordinates outside ``I`` split into the weakly essential set ``K`` (the
constraint is active with zero multiplier) and the unessential set ``J``.

Indices are zero-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky

MAX_DIM = 12
TAU_EQ = 1e-9


class QPError(Exception):
    pass


class NotPositiveDefinite(QPError):
    pass


class InfeasibleSign(QPError):
    pass


class NumericalAmbiguity(QPError):
    pass


@dataclass(frozen=True, eq=False)
class PDMatrix:
    """Symmetric positive definite matrix with a cached lower Cholesky factor."""

    entries: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.T).max() > 1e-12 * scale:
            raise NotPositiveDefinite("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            low = cholesky(a, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        if not np.all(np.diag(low) > 0):
            raise NotPositiveDefinite("non-positive Cholesky pivot")
        a.setflags(write=False)
        low.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "chol", low)

    @classmethod
    def from_factor(cls, factor) -> "PDMatrix":
        A = np.asarray(factor, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("factor must be square")
        if abs(np.linalg.det(A)) == 0.0:
            raise NotPositiveDefinite("factor is singular")
        return cls(A @ A.T)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def block(self, rows, cols=None) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = rows if cols is None else np.asarray(cols, dtype=int)
        return self.entries[np.ix_(rows, cols)]

    def sub_chol(self, idx) -> np.ndarray:
        """Cholesky factor of the principal sub-block on ``idx``."""
        try:
            return cholesky(self.block(idx), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None

    def solve_block(self, idx, rhs) -> np.ndarray:
        return cho_solve((self.sub_chol(idx), True), np.asarray(rhs, dtype=float))

    def logdet_block(self, idx) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.sub_chol(idx)))))

    def __eq__(self, other):
        return isinstance(other, PDMatrix) and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class QpSolution:
    b: np.ndarray
    b_tilde: np.ndarray
    essential: tuple[int, ...]
    weakly_essential: tuple[int, ...]
    unessential: tuple[int, ...]
    value: float
    lam: np.ndarray  # M_II^{-1} b_I, aligned with ``essential``

    @property
    def m(self) -> int:
        return len(self.essential)


def _as_pd(M) -> PDMatrix:
    return M if isinstance(M, PDMatrix) else PDMatrix(np.asarray(M, dtype=float))


@dataclass(frozen=True)
class _Candidate:
    idx: tuple[int, ...]
    lam: np.ndarray
    b_tilde: np.ndarray
    slack: np.ndarray  # b_tilde - b on the complement


def _candidate(M: PDMatrix, b: np.ndarray, idx: tuple[int, ...], tau: float):
    """Return the candidate built on ``idx`` if it passes both optimality checks."""
    bi = b[list(idx)]
    if not np.any(bi != 0):
        return None
    lam = M.solve_block(idx, bi)
    if not np.all(lam > tau * np.abs(lam).max()):
        return None
    rest = [j for j in range(M.dim) if j not in idx]
    b_tilde = b.copy()
    if rest:
        b_tilde[rest] = M.block(rest, idx) @ lam
    slack = b_tilde[rest] - b[rest]
    if np.any(slack < -tau * (1.0 + np.abs(b[rest]))):
        return None
    return _Candidate(idx, lam, b_tilde, slack)


def solve_qp(M, b: Sequence[float], tau_eq: float = TAU_EQ) -> QpSolution:
    """Solve ``min x^T M^{-1} x`` subject to ``x >= b`` by exhaustive subset search.

    Every non-empty index set ``V`` is checked for a strictly positive
    multiplier ``M_VV^{-1} b_V`` and primal feasibility of the induced
    point. Both checks use the relative tolerance ``tau_eq``; the same
    tolerance decides equality ``b~_j = b_j`` for membership in ``K``.
    """
    M = _as_pd(M)
    b = np.asarray(b, dtype=float).copy()
    d = M.dim
    if b.shape != (d,):
        raise ValueError(f"b has shape {b.shape}, expected ({d},)")
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(b)):
        raise ValueError("b must be finite")
    if not np.any(b > 0):
        raise InfeasibleSign("b has no strictly positive entry")

    found = []
    for size in range(1, d + 1):
        for idx in combinations(range(d), size):
            cand = _candidate(M, b, idx, tau_eq)
            if cand is not None:
                found.append(cand)

    if not found:
        raise NumericalAmbiguity("no index set satisfies the optimality conditions")
    if len(found) > 1:
        top = max(len(c.idx) for c in found)
        largest = [c for c in found if len(c.idx) == top]
        if len(largest) > 1:
            raise NumericalAmbiguity(
                f"index sets {[c.idx for c in largest]} all satisfy the optimality conditions"
            )
        best = largest[0]
    else:
        best = found[0]

    idx = best.idx
    rest = [j for j in range(d) if j not in idx]
    tol = tau_eq * (1.0 + np.abs(b[rest]))
    K = tuple(j for j, s, t in zip(rest, best.slack, tol) if abs(s) <= t)
    J = tuple(j for j in rest if j not in K)
    b_tilde = best.b_tilde
    if K:
        b_tilde[list(K)] = b[list(K)]
    value = float(b[list(idx)] @ best.lam)
    return QpSolution(
        b=b,
        b_tilde=b_tilde,
        essential=idx,
        weakly_essential=K,
        unessential=J,
        value=value,
        lam=best.lam,
    )


def qp_value_quadform(sol: QpSolution, x) -> float:
    """``x^T M^{-1} b~``, which only involves the essential coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape != sol.b.shape:
        raise ValueError("dimension mismatch")
    return float(x[list(sol.essential)] @ sol.lam)
