"""Fixed-step closed-loop simulation with a zero-order hold on the input.

The plant is advanced by classical RK4 at ``dt_plant``; the controller is
sampled every ``dt_control`` (an integer multiple of ``dt_plant``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numba
import numpy as np

from .certificates import CbfCertificate, ClfCertificate, build_clf, clf_value
from .controllers import (
    DroopConfig,
    DroopController,
    FeedbackLinearizingController,
    SccConfig,
    SccController,
    default_droop,
)
from .equilibrium import Equilibrium, closed_form_equilibrium
from .errors import MicrogridError, OutsideSafeSet, QpError
from .linearization import BrunovskyPair, default_poles, lie_terms, make_brunovsky
from .model import GridParams, check_state

CONTROLLERS = ("scc", "droop", "fl")


class StepFlag(enum.IntFlag):
    NONE = 0
    OUTSIDE_SAFE_SET = 1
    CPL_SATURATED = 2
    FALLBACK = 4
    BARRIER_ACTIVE = 8
    CLF_RELAXED = 16
    CONTROLLER_ERROR = 32
    NON_FINITE = 64


@numba.njit(cache=True)
def _field(x, u, cap, res, ind, c_load, r_load, p_load, v_min, i_max, out):
    n = cap.size
    total = 0.0
    for j in range(n):
        v = x[2 * j]
        i = x[2 * j + 1]
        out[2 * j] = (u[j] - i) / cap[j]
        out[2 * j + 1] = (v - i * res[j] - x[2 * n]) / ind[j]
        total += i
    v_load = x[2 * n]
    i_cpl = i_max if v_load <= v_min else p_load / v_load
    out[2 * n] = (total - v_load / r_load - i_cpl) / c_load


@numba.njit(cache=True)
def _rk4_hold(x0, u, dt, steps, cap, res, ind, c_load, r_load, p_load, v_min, i_max, lo, hi, out):
    """Advance ``steps`` RK4 steps with ``u`` held; write every state into
    ``out`` and return the smallest barrier margin seen and the number of
    finite steps taken."""
    d = x0.size
    n = cap.size
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    x = x0.copy()
    min_b = np.inf
    for s in range(steps):
        _field(x, u, cap, res, ind, c_load, r_load, p_load, v_min, i_max, k1)
        for q in range(d):
            tmp[q] = x[q] + 0.5 * dt * k1[q]
        _field(tmp, u, cap, res, ind, c_load, r_load, p_load, v_min, i_max, k2)
        for q in range(d):
            tmp[q] = x[q] + 0.5 * dt * k2[q]
        _field(tmp, u, cap, res, ind, c_load, r_load, p_load, v_min, i_max, k3)
        for q in range(d):
            tmp[q] = x[q] + dt * k3[q]
        _field(tmp, u, cap, res, ind, c_load, r_load, p_load, v_min, i_max, k4)
        finite = True
        for q in range(d):
            x[q] = x[q] + dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
            if not np.isfinite(x[q]):
                finite = False
            out[s, q] = x[q]
        if not finite:
            return min_b, s
        for j in range(n):
            b = -(x[2 * j] - lo[j]) * (x[2 * j] - hi[j])
            if b < min_b:
                min_b = b
    return min_b, steps


def _kernel_args(params: GridParams):
    return (
        np.ascontiguousarray(params.cap),
        np.ascontiguousarray(params.res),
        np.ascontiguousarray(params.ind),
        params.cap_load,
        params.res_load,
        params.p_load,
        params.v_cpl_min,
        params.i_cpl_max,
        np.ascontiguousarray(params.v_safe_lo),
        np.ascontiguousarray(params.v_safe_hi),
    )


def integrate_step(x: np.ndarray, u: np.ndarray, dt: float, params: GridParams) -> np.ndarray:
    """One RK4 step of ``x' = f(x) + g u`` with ``u`` constant over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = np.empty((1, params.dim))
    _, taken = _rk4_hold(
        np.asarray(x, dtype=float), np.asarray(u, dtype=float), float(dt), 1, *_kernel_args(params), out
    )
    if taken < 1:
        raise FloatingPointError("integration produced a non-finite state")
    return out[0].copy()


# scenarios and traces


@dataclass(frozen=True, eq=False)
class Scenario:
    params: GridParams
    v_bus_target: float
    x0: np.ndarray
    controller: str = "scc"
    dt_plant: float = 1e-6
    dt_control: float = 1e-5
    t_final: float = 0.5
    poles: tuple[float, ...] | None = None
    clf_q: np.ndarray | None = None
    alpha: float | None = None
    beta: float = 1.0
    scc: SccConfig = field(default_factory=SccConfig)
    droop: DroopConfig | None = None
    record_interval: float | None = None
    raw_trace: bool = False
    settle_tol: float = 0.05
    avg_window: float = 1e-5

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if not (self.dt_plant > 0 and self.dt_control > 0 and self.t_final >= 0):
            raise ValueError("time steps must be positive and t_final non-negative")
        if abs(self.ratio * self.dt_plant - self.dt_control) > 1e-9 * self.dt_control or self.ratio < 1:
            raise ValueError("dt_control must be an integer multiple of dt_plant")
        check_state(self.x0, self.params)
        object.__setattr__(self, "x0", np.array(self.x0, dtype=float))
        if self.controller == "scc" and np.any(
            (self.x0[0:-1:2] - self.params.v_safe_lo) * (self.x0[0:-1:2] - self.params.v_safe_hi) >= 0
        ):
            raise ValueError("SCC scenarios must start strictly inside the safe set")

    @property
    def ratio(self) -> int:
        return max(1, int(round(self.dt_control / self.dt_plant)))

    @property
    def record_every(self) -> int:
        """Plant steps between recorded samples."""
        if self.raw_trace:
            return 1
        if self.record_interval is None:
            return self.ratio
        return max(1, int(round(self.record_interval / self.dt_plant)))

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class Design:
    """Controller-independent design data derived from a scenario."""

    eq: Equilibrium
    brunovsky: BrunovskyPair
    clf: ClfCertificate
    cbf: CbfCertificate
    droop: DroopConfig


def design(scenario: Scenario) -> Design:
    p = scenario.params
    eq = closed_form_equilibrium(scenario.v_bus_target, p)
    br = make_brunovsky(p.n, scenario.poles or default_poles(p.n))
    clf = build_clf(br, scenario.clf_q, scenario.alpha)
    cbf = CbfCertificate.from_params(p, scenario.beta)
    droop = scenario.droop or default_droop(p, eq)
    return Design(eq, br, clf, cbf, droop)


def build_controller(scenario: Scenario, d: Design | None = None) -> Callable:
    d = d or design(scenario)
    p = scenario.params
    if scenario.controller == "scc":
        return SccController(
            d.eq, d.clf, d.cbf, d.brunovsky, scenario.scc, p, fallback=d.droop, hold_time=scenario.dt_control
        )
    if scenario.controller == "droop":
        return DroopController(d.droop, p)
    return FeedbackLinearizingController(d.eq, d.brunovsky, d.clf, p)


@dataclass
class TraceSummary:
    status: str
    converged: bool
    settle_time: float | None
    v_bus_avg: float
    v_bus_max_dev: float
    safety_violated: bool
    min_b: float
    averaged_state: np.ndarray
    averaged_input: np.ndarray
    t_end: float
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "settle_time": self.settle_time,
            "v_bus_avg": self.v_bus_avg,
            "v_bus_max_dev": self.v_bus_max_dev,
            "safety_violated": self.safety_violated,
            "min_b": self.min_b,
            "averaged_state": [float(v) for v in self.averaged_state],
            "averaged_input": [float(v) for v in self.averaged_input],
            "t_end": self.t_end,
            "message": self.message,
        }


@dataclass
class Trace:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    V_eta: np.ndarray
    min_b: np.ndarray
    z: np.ndarray
    flags: np.ndarray
    summary: TraceSummary
    # one entry per controller call
    ctrl_t: np.ndarray
    ctrl_V: np.ndarray
    ctrl_eta_sq: np.ndarray
    ctrl_flags: np.ndarray


def _diagnostics(x, d: Design, params: GridParams):
    margins = -(x[0:-1:2] - params.v_safe_lo) * (x[0:-1:2] - params.v_safe_hi)
    flags = StepFlag.NONE
    if np.any(margins < 0):
        flags |= StepFlag.OUTSIDE_SAFE_SET
    try:
        terms = lie_terms(x, d.eq, params)
    except MicrogridError:
        return float("nan"), float(margins.min()), np.full(params.n - 1, np.nan), flags | StepFlag.CPL_SATURATED
    return clf_value(terms.eta, d.clf), float(margins.min()), terms.zee, flags


def _log_flags(log) -> StepFlag:
    flags = StepFlag.NONE
    if log.qp_status == "fallback":
        flags |= StepFlag.FALLBACK | StepFlag.CPL_SATURATED
    if any(k.startswith(("cbf", "hold")) for k in log.active_constraints):
        flags |= StepFlag.BARRIER_ACTIVE
    if "clf" in log.active_constraints:
        flags |= StepFlag.CLF_RELAXED
    return flags


def run(scenario: Scenario, controller: Callable | None = None) -> Trace:
    """Simulate ``scenario`` and return the decimated trace with its summary.

    A controller exception or a non-finite state ends the run early with the
    corresponding flag set on the last record.
    """
    p = scenario.params
    d = design(scenario)
    controller = controller or build_controller(scenario, d)
    args = _kernel_args(p)
    ratio = scenario.ratio
    n_plant = int(round(scenario.t_final / scenario.dt_plant))
    n_ctrl = -(-n_plant // ratio)
    every = scenario.record_every
    dt = scenario.dt_plant
    window = max(1, int(round(scenario.avg_window / dt)))

    rec_idx = []
    rec_x, rec_u, rec_flags = [], [], []
    ctrl_t = np.full(n_ctrl, np.nan)
    ctrl_V = np.full(n_ctrl, np.nan)
    ctrl_eta = np.full(n_ctrl, np.nan)
    ctrl_flags = np.zeros(n_ctrl, dtype=np.int64)

    x = scenario.x0.copy()
    u = np.zeros(p.n)
    min_b_all = float(np.min(-(x[0:-1:2] - p.v_safe_lo) * (x[0:-1:2] - p.v_safe_hi)))
    tail_x = np.empty((0, p.dim))
    tail_u = np.empty((0, p.n))
    status, message = "ok", ""
    end_flag = StepFlag.NONE
    buf = np.empty((ratio, p.dim))
    step = 0

    for k in range(n_ctrl):
        try:
            u, log = controller(x)
        except OutsideSafeSet as exc:
            status, message, end_flag = "safety_violation", str(exc), StepFlag.OUTSIDE_SAFE_SET
            break
        except (QpError, MicrogridError, np.linalg.LinAlgError) as exc:
            status, message, end_flag = "controller_error", f"{type(exc).__name__}: {exc}", StepFlag.CONTROLLER_ERROR
            break
        if not np.all(np.isfinite(u)):
            status, message, end_flag = "numerical_failure", "controller returned a non-finite input", StepFlag.NON_FINITE
            break
        u = np.ascontiguousarray(u, dtype=float)
        ctrl_t[k] = step * dt
        ctrl_V[k] = log.V_eta
        ctrl_eta[k] = log.eta_sq
        ctrl_flags[k] = int(_log_flags(log))
        if step % every == 0:
            rec_idx.append(step)
            rec_x.append(x.copy())
            rec_u.append(u.copy())
            rec_flags.append(ctrl_flags[k])
        steps = min(ratio, n_plant - step)
        mb, taken = _rk4_hold(x, u, dt, steps, *args, buf)
        min_b_all = min(min_b_all, mb)
        if taken < steps:
            step += taken
            x = buf[taken - 1].copy() if taken else x
            status, message, end_flag = "numerical_failure", "non-finite plant state", StepFlag.NON_FINITE
            break
        for s in range(steps):
            idx = step + s + 1
            if idx % every == 0 and idx < n_plant:
                # samples strictly between controller calls
                if idx % ratio:
                    rec_idx.append(idx)
                    rec_x.append(buf[s].copy())
                    rec_u.append(u.copy())
                    rec_flags.append(0)
        if n_plant - (step + steps) < window:
            keep = buf[:steps]
            tail_x = np.vstack([tail_x, keep])[-window:]
            tail_u = np.vstack([tail_u, np.repeat(u[None, :], steps, axis=0)])[-window:]
        step += steps
        x = buf[steps - 1].copy()

    # closing record at the final (or failure) time
    rec_idx.append(step)
    rec_x.append(x.copy())
    rec_u.append(u.copy())
    rec_flags.append(int(end_flag))

    t_rec = np.array(rec_idx, dtype=float) * dt
    X = np.array(rec_x)
    U = np.array(rec_u)
    V = np.empty(len(X))
    MB = np.empty(len(X))
    Z = np.empty((len(X), p.n - 1))
    F = np.array(rec_flags, dtype=np.int64)
    for r, xr in enumerate(X):
        V[r], MB[r], Z[r], fl = _diagnostics(xr, d, p)
        F[r] |= int(fl)

    if tail_x.shape[0] == 0:
        tail_x, tail_u = X[-1:], U[-1:]
    v_bus_tail = tail_x[:, -1]
    target = scenario.v_bus_target
    dev = float(np.max(np.abs(v_bus_tail - target)))
    finished = status == "ok"
    converged = finished and dev <= scenario.settle_tol
    settle_time = None
    if converged:
        outside = np.flatnonzero(np.abs(X[:, -1] - target) > scenario.settle_tol)
        settle_time = 0.0 if outside.size == 0 else float(t_rec[min(outside[-1] + 1, len(t_rec) - 1)])
    safety_violated = min_b_all < 0 or status == "safety_violation"
    summary = TraceSummary(
        status=status,
        converged=bool(converged),
        settle_time=settle_time,
        v_bus_avg=float(v_bus_tail.mean()),
        v_bus_max_dev=dev,
        safety_violated=bool(safety_violated),
        min_b=float(min_b_all),
        averaged_state=tail_x.mean(axis=0),
        averaged_input=tail_u.mean(axis=0),
        t_end=float(step * dt),
        message=message,
    )
    done = np.isfinite(ctrl_t)
    return Trace(
        t=t_rec, x=X, u=U, V_eta=V, min_b=MB, z=Z, flags=F, summary=summary,
        ctrl_t=ctrl_t[done], ctrl_V=ctrl_V[done], ctrl_eta_sq=ctrl_eta[done], ctrl_flags=ctrl_flags[done],
    )


def table2_initial_state() -> np.ndarray:
    from .model import pack_state

    return pack_state(
        [39.37, 46.37, 9.37, 39.37, 46.37],
        [14.61, 15.71, 16.94, 13.61, 8.25],
        9.00,
    )


def exit_status(summary: TraceSummary) -> int:
    if summary.status in ("numerical_failure", "controller_error"):
        return 3
    if summary.safety_violated:
        return 2
    return 0


def finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None
