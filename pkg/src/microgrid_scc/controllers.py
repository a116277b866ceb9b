"""Per-step controllers: the safety-critical QP controller (SCC), a robust
droop baseline and bare feedback linearisation.

Every controller is a callable ``controller(x) -> (u, ControlStepLog)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certificates import (
    CbfCertificate,
    ClfCertificate,
    ConstraintRow,
    barrier_margins,
    cbf_row,
    clf_row,
    clf_value,
)
from .equilibrium import Equilibrium
from .errors import CplSaturated, OutsideSafeSet
from .linearization import BrunovskyPair, fl_from_terms, lie_terms
from .model import GridParams
from .qpsolve import QpProblem, solve_qp


@dataclass(frozen=True)
class SccConfig:
    """``m`` weighs the CLF slack; the positive branch of the CLF scaling
    uses ``gamma_slope`` which defaults to the paired value ``(m + 1) / m``.

    ``hold_margin`` (volts) enables the one-hold-ahead voltage rows; ``None``
    leaves only the continuous-time barrier rows.
    """

    m: float = 100.0
    gamma_slope: float | None = None
    u_bounds: tuple[float, float] | None = None
    hold_margin: float | None = 0.1

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m must be positive")
        if self.gamma_slope is not None and not self.gamma_slope > 0:
            raise ValueError("gamma_slope must be positive")
        if self.u_bounds is not None and not self.u_bounds[0] < self.u_bounds[1]:
            raise ValueError("u_bounds must be an increasing pair")
        if self.hold_margin is not None and not self.hold_margin >= 0:
            raise ValueError("hold_margin must be non-negative or None")

    @property
    def slope(self) -> float:
        return (self.m + 1.0) / self.m if self.gamma_slope is None else self.gamma_slope

    def gamma(self, p: float) -> float:
        return self.slope * p if p >= 0 else p


@dataclass(frozen=True, eq=False)
class DroopConfig:
    """Voltage droop with reference clamping and a proportional voltage loop.

    ``v_ref_j = clamp(v_nominal - droop_gain_j * i_tj, v_lo_j, v_hi_j)`` and
    ``u_j = i_tj + k_p C_j (v_ref_j - v_j)`` saturated to ``u_bounds``.
    """

    v_nominal: float
    droop_gain: np.ndarray
    k_p: float = 2e4
    u_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        gains = np.array(self.droop_gain, dtype=float).reshape(-1)
        if np.any(gains < 0):
            raise ValueError("droop gains must be non-negative")
        if not self.k_p > 0:
            raise ValueError("k_p must be positive")
        if self.u_bounds is not None and not self.u_bounds[0] < self.u_bounds[1]:
            raise ValueError("u_bounds must be an increasing pair")
        object.__setattr__(self, "droop_gain", gains)


DROOP_RATIO = 60.0


def default_droop(params: GridParams, eq: Equilibrium, ratio: float = DROOP_RATIO) -> DroopConfig:
    """Droop whose operating point is the minimum-loss equilibrium.

    Gains ``ratio * R_j`` keep the sharing proportional to ``1 / R_j``.  The
    effective source resistance ``(ratio + 1) * R_par`` must sit between
    ``L_par / (C_L |r_cpl|)`` (damping of the line/bus resonance) and the
    magnitude ``|r_cpl|`` of the net incremental load resistance; the default
    ratio lands near the middle of that window for the reference grid.
    """
    gain = ratio * params.res
    v_nom = eq.terminal_voltage + float(gain[0] * eq.line_currents[0])
    return DroopConfig(v_nominal=v_nom, droop_gain=gain)


@dataclass
class ControlStepLog:
    u_applied: np.ndarray
    delta: np.ndarray
    active_constraints: tuple[str, ...] = ()
    V_eta: float = float("nan")
    eta_sq: float = float("nan")
    min_b: float = float("nan")
    qp_status: str = "none"
    wall_time: float = 0.0


def droop_step(x: np.ndarray, config: DroopConfig, params: GridParams) -> np.ndarray:
    v = x[0:-1:2]
    i_t = x[1:-1:2]
    v_ref = np.clip(config.v_nominal - config.droop_gain * i_t, params.v_safe_lo, params.v_safe_hi)
    u = i_t + config.k_p * params.cap * (v_ref - v)
    if config.u_bounds is not None:
        u = np.clip(u, *config.u_bounds)
    return u


class DroopController:
    def __init__(self, config: DroopConfig, params: GridParams):
        self.config = config
        self.params = params

    def __call__(self, x):
        t0 = time.perf_counter()
        u = droop_step(x, self.config, self.params)
        margins = -(x[0:-1:2] - self.params.v_safe_lo) * (x[0:-1:2] - self.params.v_safe_hi)
        return u, ControlStepLog(
            u_applied=u,
            delta=np.zeros_like(u),
            min_b=float(margins.min()),
            qp_status="droop",
            wall_time=time.perf_counter() - t0,
        )


class FeedbackLinearizingController:
    def __init__(self, eq: Equilibrium, brunovsky: BrunovskyPair, clf: ClfCertificate, params: GridParams):
        self.eq, self.brunovsky, self.clf, self.params = eq, brunovsky, clf, params

    def __call__(self, x):
        t0 = time.perf_counter()
        terms = lie_terms(x, self.eq, self.params)
        u = fl_from_terms(terms, self.brunovsky)
        margins = -(x[0:-1:2] - self.params.v_safe_lo) * (x[0:-1:2] - self.params.v_safe_hi)
        return u, ControlStepLog(
            u_applied=u,
            delta=np.zeros_like(u),
            V_eta=clf_value(terms.eta, self.clf),
            eta_sq=float(terms.eta @ terms.eta),
            min_b=float(margins.min()),
            qp_status="fl",
            wall_time=time.perf_counter() - t0,
        )


def _box_rows(n: int, bounds: tuple[float, float]) -> list[ConstraintRow]:
    lo, hi = bounds
    rows = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append(ConstraintRow(e, np.zeros(n), hi, f"umax{j + 1}"))
        rows.append(ConstraintRow(-e, np.zeros(n), -lo, f"umin{j + 1}"))
    return rows


def hold_rows(x: np.ndarray, params: GridParams, hold_time: float, margin: float) -> list[ConstraintRow]:
    """Keep the terminal voltage predicted one hold period ahead inside the
    safety box shrunk by ``margin``.

    Over a hold of length ``T`` with input ``u_j``, ``v_j`` moves by about
    ``T / C_j * (u_j - i_j - T * di_j / 2)`` where ``di_j`` is the line-current
    slope at the sample.
    """
    n = params.n
    v = x[0:-1:2]
    i_t = x[1:-1:2]
    di = (v - params.res * i_t - x[-1]) / params.ind
    gain = hold_time / params.cap
    base = v - gain * (i_t + 0.5 * hold_time * di)
    rows = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = gain[j]
        rows.append(ConstraintRow(e, np.zeros(n), params.v_safe_hi[j] - margin - base[j], f"hold_hi{j + 1}"))
        rows.append(ConstraintRow(-e, np.zeros(n), base[j] - params.v_safe_lo[j] - margin, f"hold_lo{j + 1}"))
    return rows


def scc_step(
    x: np.ndarray,
    eq: Equilibrium,
    clf: ClfCertificate,
    cbf: CbfCertificate,
    brunovsky: BrunovskyPair,
    config: SccConfig,
    params: GridParams,
    fallback: DroopConfig | None = None,
    hold_time: float | None = None,
) -> tuple[np.ndarray, ControlStepLog]:
    """One solve of the CLF/CBF quadratic program over ``(u, delta)``.

    The CLF row is centred on the feedback-linearising input ``u_FL``, so
    ``u = u_FL`` is returned whenever no barrier row binds.  On the saturated
    CPL branch (``v_L <= V_min``) the droop input ``fallback`` is filtered
    through the barrier rows instead.  With a ``hold_time`` and a configured
    ``hold_margin`` the predicted voltage at the next sample is also kept
    inside the box.
    """
    t0 = time.perf_counter()
    n = params.n
    margins = barrier_margins(x, cbf)
    if np.any(margins <= 0):
        j = int(np.argmin(margins))
        raise OutsideSafeSet(f"converter {j + 1} voltage {x[2 * j]:.9g} V left the safe set")
    cbf_rows = [cbf_row(x, j, cbf, params) for j in range(n)]
    box = _box_rows(n, config.u_bounds) if config.u_bounds is not None else []
    if hold_time is not None and config.hold_margin is not None:
        box += hold_rows(x, params, hold_time, config.hold_margin)

    V = eta_sq = float("nan")
    try:
        terms = lie_terms(x, eq, params)
    except CplSaturated:
        if fallback is None:
            raise
        u_nom = droop_step(x, fallback, params)
        rows: Sequence[ConstraintRow] = cbf_rows + box
        status = "fallback"
    else:
        u_nom = fl_from_terms(terms, brunovsky)
        V = clf_value(terms.eta, clf)
        eta_sq = float(terms.eta @ terms.eta)
        rows = [clf_row(terms, clf, u_nominal=u_nom, gamma=config.gamma)] + cbf_rows + box
        status = "ok"

    hess = np.concatenate([np.ones(n), np.full(n, config.m)])
    center = np.concatenate([u_nom, np.zeros(n)])
    sol = solve_qp(QpProblem.from_rows(hess, center, rows))
    u = sol.w[:n]
    return u, ControlStepLog(
        u_applied=u,
        delta=sol.w[n:],
        active_constraints=tuple(rows[i].kind for i in sol.active_set),
        V_eta=V,
        eta_sq=eta_sq,
        min_b=float(margins.min()),
        qp_status=status,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class SccController:
    eq: Equilibrium
    clf: ClfCertificate
    cbf: CbfCertificate
    brunovsky: BrunovskyPair
    config: SccConfig
    params: GridParams
    fallback: DroopConfig | None = field(default=None)
    hold_time: float | None = None

    def __call__(self, x):
        return scc_step(
            x, self.eq, self.clf, self.cbf, self.brunovsky, self.config, self.params, self.fallback, self.hold_time
        )
