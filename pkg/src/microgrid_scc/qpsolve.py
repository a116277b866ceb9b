"""Dense active-set enumeration for tiny strictly convex QPs.

Solves::

    minimise    sum_i h_i (w_i - c_i)**2
    subject to  A w <= r

with ``h > 0``.  The problem is strictly convex, so any active set whose KKT
point is primal feasible with non-negative multipliers gives the unique
minimiser.  A candidate set is first read off a least-distance solve (NNLS on
the dual); if that candidate does not pass the exact KKT test, candidate sets
are enumerated in order of increasing cardinality, lexicographically within a
cardinality, and the first one that passes is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .certificates import ConstraintRow
from .errors import QpIllConditioned, QpInfeasible

FEAS_TOL = 1e-9
MULT_TOL = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class QpProblem:
    hessian_diag: np.ndarray
    center: np.ndarray
    A: np.ndarray
    r: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        h = np.asarray(self.hessian_diag, dtype=float)
        c = np.asarray(self.center, dtype=float)
        A = np.asarray(self.A, dtype=float).reshape(-1, h.size)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        if c.shape != h.shape:
            raise ValueError("center and hessian_diag must have equal length")
        if np.any(h <= 0):
            raise ValueError("hessian_diag must be strictly positive")
        if A.shape[0] != r.size:
            raise ValueError("row count mismatch between A and r")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(r)) and np.all(np.isfinite(c))):
            raise ValueError("QP data must be finite")
        object.__setattr__(self, "hessian_diag", h)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.hessian_diag.size

    @classmethod
    def from_rows(cls, hessian_diag, center, rows: Sequence[ConstraintRow]) -> "QpProblem":
        """Stack ``(coeff_u, coeff_delta)`` rows over the variable ``w = (u, delta)``."""
        if rows:
            A = np.array([np.concatenate([row.coeff_u, row.coeff_delta]) for row in rows])
            r = np.array([row.rhs for row in rows])
        else:
            A = np.zeros((0, len(center)))
            r = np.zeros(0)
        return cls(hessian_diag, center, A, r, tuple(row.kind for row in rows))

    def cost(self, w: np.ndarray) -> float:
        return float(np.dot(self.hessian_diag, (w - self.center) ** 2))


@dataclass(frozen=True, eq=False)
class QpSolution:
    problem: QpProblem
    w: np.ndarray
    active_set: tuple[int, ...]
    multipliers: np.ndarray
    candidates_tried: int = field(default=0)

    @cached_property
    def kkt_residual(self) -> float:
        return kkt_residual(self.problem, self.w, self.multipliers)

    @cached_property
    def cost(self) -> float:
        return self.problem.cost(self.w)


def _kkt_point(idx, An, rn, hinv, c):
    """Multipliers and primal point for rows ``idx`` held with equality."""
    As = An[list(idx)]
    S = 0.5 * (As * hinv) @ As.T
    # a single normalised row gives S > 0 of the order of min(hinv)
    if len(idx) > 1 and np.linalg.cond(S) > COND_LIMIT:
        return None
    lam = np.linalg.solve(S, As @ c - rn[list(idx)])
    w = c - 0.5 * hinv * (As.T @ lam)
    return lam, w


def _ldp_guess(An, rn, h, c) -> tuple[int, ...] | None:
    """Active rows of the least-distance reformulation, solved by NNLS.

    With ``y = sqrt(h) (w - c)`` the problem is ``min |y|`` subject to
    ``G y >= e`` where ``G = -An / sqrt(h)`` and ``e = An c - rn``.
    """
    if rn.size == 0:
        return ()
    G = -An / np.sqrt(h)
    e = An @ c - rn
    if np.all(e <= 0):
        return ()
    scale = np.abs(e).max()
    E = np.vstack([G.T, e[None, :] / scale])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    try:
        lam, _ = nnls(E, f, maxiter=50 * E.shape[1])
    except RuntimeError:
        return None
    support = lam > 1e-12 * max(lam.max(), 1e-300)
    return tuple(int(i) for i in np.flatnonzero(support))


def _accept(idx, An, rn, hinv, c, tol):
    """KKT point of active set ``idx`` if it is optimal, ``None`` if it is not
    and ``False`` if the reduced system is ill-conditioned."""
    if not idx:
        lam, w = np.zeros(0), c.copy()
    else:
        res = _kkt_point(idx, An, rn, hinv, c)
        if res is None:
            return False
        lam, w = res
        if np.any(lam < -MULT_TOL * max(1.0, np.abs(lam).max())):
            return None
    if np.any(An @ w - rn > tol):
        return None
    return lam, w


def solve_qp(problem: QpProblem, seed: bool = True) -> QpSolution:
    """``seed=False`` skips the NNLS candidate and enumerates from scratch."""
    h, c = problem.hessian_diag, problem.center
    hinv = 1.0 / h
    A, r = problem.A, problem.r
    k = r.size
    norms = np.linalg.norm(A, axis=1) if k else np.zeros(0)
    live = np.flatnonzero(norms > 0)
    dead = np.flatnonzero(norms == 0)
    if np.any(r[dead] < -FEAS_TOL * (1 + np.abs(r[dead]))):
        raise QpInfeasible("a constant row 0 <= r has negative r")
    An = A[live] / norms[live, None]
    rn = r[live] / norms[live]
    tol = FEAS_TOL * (1.0 + np.abs(rn))

    def finish(idx, lam, w, tried):
        multipliers = np.zeros(k)
        chosen = live[list(idx)]
        multipliers[chosen] = np.maximum(lam, 0.0) / norms[chosen]
        return QpSolution(
            problem=problem,
            w=w,
            active_set=tuple(int(i) for i in chosen),
            multipliers=multipliers,
            candidates_tried=tried,
        )

    tried = 1
    if np.all(An @ c - rn <= tol):
        return finish((), np.zeros(0), c.copy(), tried)
    if seed:
        guess = _ldp_guess(An, rn, h, c)
        if guess is not None and len(guess) <= problem.dim:
            tried += 1
            res = _accept(guess, An, rn, hinv, c, tol)
            if res:
                return finish(guess, *res, tried)

    skipped_ill = False
    for size in range(min(live.size, problem.dim) + 1):
        for idx in combinations(range(live.size), size):
            tried += 1
            res = _accept(idx, An, rn, hinv, c, tol)
            if res is False:
                skipped_ill = True
            elif res is not None:
                return finish(idx, *res, tried)
    if skipped_ill:
        raise QpIllConditioned("no well-conditioned active set satisfies the KKT conditions")
    raise QpInfeasible("no candidate active set is primal feasible")


def kkt_residual(problem: QpProblem, w: np.ndarray, multipliers: np.ndarray) -> float:
    """Largest scaled violation among stationarity, primal feasibility and
    complementary slackness."""
    h, c, A, r = problem.hessian_diag, problem.center, problem.A, problem.r
    grad = 2.0 * h * (w - c)
    stat = np.linalg.norm(grad + A.T @ multipliers) / (1.0 + np.linalg.norm(grad) + np.linalg.norm(2 * h * c))
    if r.size == 0:
        return float(stat)
    norms = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    slack = (A @ w - r) / norms
    scale = 1.0 + np.abs(r) / norms
    primal = np.max(np.maximum(slack, 0.0) / scale)
    comp = np.max(np.abs(multipliers * norms * slack) / scale / (1.0 + np.abs(multipliers * norms)))
    return float(max(stat, primal, comp))
