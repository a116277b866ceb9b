"""Quadratic CLF on the output state and reciprocal voltage barriers.

Every constraint is emitted in the canonical row form::

    coeff_u . u + coeff_delta . delta <= rhs
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OutsideSafeSet
from .linearization import BrunovskyPair, LieTerms
from .model import GridParams


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` through the Kronecker-sum linear system.

    ``vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P)`` with row-major
    ``vec``; the system has size ``d**2`` which is fine for ``d`` up to ~10.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d) or Q.shape != (d, d):
        raise ValueError("A and Q must be square and of equal size")
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise ValueError("A is not Hurwitz")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * np.abs(Q).max()):
        raise ValueError("Q must be symmetric")
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise ValueError("Q must be positive definite") from None
    eye = np.eye(d)
    M = np.kron(eye, A.T) + np.kron(A.T, eye)
    # Hurwitz A keeps every eigenvalue sum nonzero, but the system can still be
    # badly scaled; trust solve() and reject only a genuinely singular matrix.
    P = np.linalg.solve(M, -Q.reshape(-1)).reshape(d, d)
    if not np.all(np.isfinite(P)):
        raise np.linalg.LinAlgError("vectorised Lyapunov system is singular")
    return 0.5 * (P + P.T)


@dataclass(frozen=True, eq=False)
class ClfCertificate:
    P: np.ndarray
    Q: np.ndarray
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.alpha > np.linalg.eigvalsh(self.Q).min() * (1 + 1e-12):
            raise ValueError("alpha must not exceed the smallest eigenvalue of Q")


def build_clf(brunovsky: BrunovskyPair, Q: np.ndarray | None = None, alpha: float | None = None) -> ClfCertificate:
    d = brunovsky.F.shape[0]
    Q = np.eye(d) if Q is None else np.asarray(Q, dtype=float)
    if alpha is None:
        alpha = 0.5 * np.linalg.eigvalsh(Q).min()
    return ClfCertificate(P=solve_lyapunov(brunovsky.A_cl, Q), Q=Q, alpha=float(alpha))


def clf_value(eta: np.ndarray, cert: ClfCertificate) -> float:
    return float(eta @ cert.P @ eta)


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    coeff_u: np.ndarray
    coeff_delta: np.ndarray
    rhs: float
    kind: str  # "clf" or "cbf<j>"


def clf_lie(terms: LieTerms, cert: ClfCertificate) -> tuple[float, np.ndarray]:
    """``(L_f V, L_g V)`` of ``V = eta^T P eta`` along the output dynamics."""
    Peta = cert.P @ terms.eta
    return 2.0 * float(Peta @ terms.f_eta), 2.0 * (Peta @ terms.g_eta)


def clf_row(
    terms: LieTerms,
    cert: ClfCertificate,
    u_nominal: np.ndarray | None = None,
    gamma: Callable[[float], float] | None = None,
) -> ConstraintRow:
    """Relaxed CLF decrease row.

    With ``p = L_f V + L_g V u_nom + alpha |eta|^2`` the row reads
    ``L_g V (u - u_nom) + L_g V delta <= -gamma(p)``.  Without ``u_nominal``
    and ``gamma`` this is the plain row ``L_g V (u + delta) <= -(L_f V + alpha |eta|^2)``.
    """
    lf, lg = clf_lie(terms, cert)
    p = lf + cert.alpha * float(terms.eta @ terms.eta)
    offset = 0.0
    if u_nominal is not None:
        offset = float(lg @ u_nominal)
        p += offset
    g = p if gamma is None else gamma(p)
    return ConstraintRow(coeff_u=lg, coeff_delta=lg.copy(), rhs=offset - g, kind="clf")


@dataclass(frozen=True, eq=False)
class CbfCertificate:
    beta: float
    v_lo: np.ndarray
    v_hi: np.ndarray

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if np.any(np.asarray(self.v_lo) >= np.asarray(self.v_hi)):
            raise ValueError("barrier bounds must be strictly ordered")

    @classmethod
    def from_params(cls, params: GridParams, beta: float = 1.0) -> "CbfCertificate":
        return cls(beta=float(beta), v_lo=params.v_safe_lo, v_hi=params.v_safe_hi)


@dataclass(frozen=True)
class BarrierValue:
    b: float
    B: float  # inf outside the safe set
    inside: bool


def cbf_value(x: np.ndarray, j: int, cert: CbfCertificate) -> BarrierValue:
    v = x[2 * j]
    b = -(v - cert.v_lo[j]) * (v - cert.v_hi[j])
    if b > 0:
        return BarrierValue(b=float(b), B=float(1.0 / b), inside=True)
    return BarrierValue(b=float(b), B=float("inf"), inside=False)


def barrier_margins(x: np.ndarray, cert: CbfCertificate) -> np.ndarray:
    """``b_j`` for every converter at once."""
    v = x[0:-1:2]
    return -(v - cert.v_lo) * (v - cert.v_hi)


def cbf_row(x: np.ndarray, j: int, cert: CbfCertificate, params: GridParams) -> ConstraintRow:
    n = params.n
    v, i_t = x[2 * j], x[2 * j + 1]
    b = -(v - cert.v_lo[j]) * (v - cert.v_hi[j])
    if not b > 0:
        raise OutsideSafeSet(f"converter {j + 1} voltage {v:.6g} V outside ({cert.v_lo[j]}, {cert.v_hi[j]})")
    s = 2.0 * v - cert.v_lo[j] - cert.v_hi[j]
    grad = s / b**2
    coeff = np.zeros(n)
    coeff[j] = grad / params.cap[j]
    lf = -grad * i_t / params.cap[j]
    return ConstraintRow(coeff_u=coeff, coeff_delta=np.zeros(n), rhs=cert.beta * b - lf, kind=f"cbf{j + 1}")
