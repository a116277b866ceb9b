"""Minimum-loss equilibrium of the microgrid for a chosen bus voltage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GridParams, pack_state


@dataclass(frozen=True, eq=False)
class Equilibrium:
    x_star: np.ndarray
    u_star: np.ndarray
    v_bus_target: float

    @property
    def line_currents(self) -> np.ndarray:
        return self.x_star[1:-1:2]

    @property
    def terminal_voltage(self) -> float:
        return float(self.x_star[0])


def load_current(v_bus: float, params: GridParams) -> float:
    """Steady-state current drawn by the resistive load plus the CPL."""
    return v_bus / params.res_load + params.p_load / v_bus


def _check_target(v_bus_target: float, params: GridParams) -> float:
    v = float(v_bus_target)
    if not math.isfinite(v) or v <= params.v_cpl_min:
        raise ValueError(
            f"bus voltage target {v_bus_target} must exceed the CPL cutoff {params.v_cpl_min} V"
        )
    return v


def _assemble(line_i: np.ndarray, v_bus: float, params: GridParams) -> Equilibrium:
    v_term = v_bus + params.res * line_i
    # equal by construction; use the first line so all entries match bit-for-bit
    v_term = np.full(params.n, v_term[0])
    x = pack_state(v_term, line_i, v_bus)
    return Equilibrium(x_star=x, u_star=line_i.copy(), v_bus_target=v_bus)


def closed_form_equilibrium(v_bus_target: float, params: GridParams) -> Equilibrium:
    """Equilibrium with line currents inversely proportional to line resistance.

    The common voltage drop across every line is ``R_par * I_L`` where
    ``R_par`` is the parallel combination of the line resistances and ``I_L``
    the total load current at the target bus voltage.
    """
    v = _check_target(v_bus_target, params)
    res = [float(r) for r in params.res]
    r_par = math.prod(res) / sum(
        math.prod(r for i, r in enumerate(res) if i != j) for j in range(len(res))
    )
    drop = r_par * load_current(v, params)
    line_i = drop / params.res
    x = pack_state(np.full(params.n, drop + v), line_i, v)
    return Equilibrium(x_star=x, u_star=line_i.copy(), v_bus_target=v)


def oracle_equilibrium(v_bus_target: float, params: GridParams) -> Equilibrium:
    """Same equilibrium obtained by solving the loss-minimisation KKT system.

    Minimises ``sum_j R_j i_j**2`` subject to ``sum_j i_j = I_L`` through the
    stationarity conditions ``2 R_j i_j + mu = 0`` and the equality row.
    """
    v = _check_target(v_bus_target, params)
    n = params.n
    kkt = np.zeros((n + 1, n + 1))
    kkt[np.arange(n), np.arange(n)] = 2.0 * params.res
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = load_current(v, params)
    assert np.linalg.cond(kkt) < 1e14, "singular KKT system"
    sol = np.linalg.solve(kkt, rhs)
    return _assemble(sol[:n], v, params)


def line_loss(line_i: np.ndarray, params: GridParams) -> float:
    return float(np.dot(params.res, np.asarray(line_i) ** 2))
