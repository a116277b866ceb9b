"""Single-bus DC microgrid: parameters and control-affine dynamics.

The state vector interleaves converter voltages and line currents and ends
with the bus voltage::

    x = (v_1, i_t1, v_2, i_t2, ..., v_n, i_tn, v_L)

The input ``u`` stacks the source currents ``i_s1 .. i_sn``.  All quantities
are SI (volts, amperes, farads, henries, ohms, watts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GridParams:
    """Physical constants of an n-converter single-bus microgrid.

    ``res_load`` may be ``math.inf`` (no resistive load) and ``p_load`` may be
    zero (CPL disconnected); every other element must be strictly positive.
    ``i_cpl_max`` is derived as ``p_load / v_cpl_min`` so the CPL IV curve is
    continuous at the cutoff voltage.
    """

    cap: np.ndarray
    res: np.ndarray
    ind: np.ndarray
    cap_load: float
    res_load: float
    p_load: float
    v_cpl_min: float = 5.0
    v_safe_lo: np.ndarray | None = None
    v_safe_hi: np.ndarray | None = None
    i_cpl_max: float = field(init=False)

    def __post_init__(self):
        cap = _frozen(self.cap, "cap")
        n = cap.size
        if n < 1:
            raise ValueError("need at least one converter")
        res = _frozen(self.res, "res")
        ind = _frozen(self.ind, "ind")
        lo = _frozen(np.broadcast_to(5.0 if self.v_safe_lo is None else self.v_safe_lo, (n,)), "v_safe_lo")
        hi = _frozen(np.broadcast_to(50.0 if self.v_safe_hi is None else self.v_safe_hi, (n,)), "v_safe_hi")
        for name, arr in (("res", res), ("ind", ind)):
            if arr.size != n:
                raise ValueError(f"{name} has length {arr.size}, expected {n}")
        if np.any(cap <= 0) or np.any(res <= 0) or np.any(ind <= 0):
            raise ValueError("capacitances, resistances and inductances must be positive")
        if not (self.cap_load > 0 and self.res_load > 0):
            raise ValueError("cap_load and res_load must be positive")
        if not (self.p_load >= 0 and math.isfinite(self.p_load)):
            raise ValueError("p_load must be finite and non-negative")
        if not self.v_cpl_min > 0:
            raise ValueError("v_cpl_min must be positive")
        if np.any(lo >= hi):
            raise ValueError("every v_safe_lo must be strictly below v_safe_hi")
        set_ = object.__setattr__
        set_(self, "cap", cap)
        set_(self, "res", res)
        set_(self, "ind", ind)
        set_(self, "v_safe_lo", lo)
        set_(self, "v_safe_hi", hi)
        set_(self, "cap_load", float(self.cap_load))
        set_(self, "res_load", float(self.res_load))
        set_(self, "p_load", float(self.p_load))
        set_(self, "v_cpl_min", float(self.v_cpl_min))
        set_(self, "i_cpl_max", self.p_load / self.v_cpl_min)

    @property
    def n(self) -> int:
        return self.cap.size

    @property
    def dim(self) -> int:
        return 2 * self.n + 1


def table1_params(v_cpl_min: float = 5.0, v_safe_lo: float = 5.0, v_safe_hi: float = 50.0) -> GridParams:
    """The five-converter benchmark grid (capacitances in mF, resistances in
    mOhm and inductances in mH converted to SI)."""
    return GridParams(
        cap=np.array([0.49, 0.47, 0.49, 0.57, 0.47]) * 1e-3,
        res=np.array([8.78, 17.78, 16.78, 19.78, 27.78]) * 1e-3,
        ind=np.array([0.09, 0.08, 0.09, 0.09, 0.08]) * 1e-3,
        cap_load=0.47e-3,
        res_load=1.5,
        p_load=1875.0,
        v_cpl_min=v_cpl_min,
        v_safe_lo=np.full(5, v_safe_lo),
        v_safe_hi=np.full(5, v_safe_hi),
    )


# state layout helpers


def voltages(x: np.ndarray) -> np.ndarray:
    return x[0:-1:2]


def line_currents(x: np.ndarray) -> np.ndarray:
    return x[1:-1:2]


def pack_state(v, i_t, v_load) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    i_t = np.asarray(i_t, dtype=float)
    if v.shape != i_t.shape or v.ndim != 1:
        raise ValueError("v and i_t must be 1-D arrays of equal length")
    x = np.empty(2 * v.size + 1)
    x[0:-1:2] = v
    x[1:-1:2] = i_t
    x[-1] = v_load
    return x


def check_state(x, params: GridParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError(f"state must have length {params.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state has non-finite entries")
    return x


# dynamics


def cpl_current(v_load: float, params: GridParams) -> float:
    """Current drawn by the constant power load at bus voltage ``v_load``."""
    if v_load <= params.v_cpl_min:
        return params.i_cpl_max
    return params.p_load / v_load


def drift(x: np.ndarray, params: GridParams) -> np.ndarray:
    v = x[0:-1:2]
    i_t = x[1:-1:2]
    v_load = x[-1]
    out = np.empty_like(x, dtype=float)
    out[0:-1:2] = -i_t / params.cap
    out[1:-1:2] = (v - i_t * params.res - v_load) / params.ind
    out[-1] = (i_t.sum() - v_load / params.res_load - cpl_current(v_load, params)) / params.cap_load
    return out


def drift_jacobian(x: np.ndarray, params: GridParams) -> np.ndarray:
    """Analytic Jacobian of :func:`drift` (one-sided at the CPL cutoff)."""
    n = params.n
    J = np.zeros((2 * n + 1, 2 * n + 1))
    v_load = x[-1]
    for j in range(n):
        iv, ii = 2 * j, 2 * j + 1
        J[iv, ii] = -1.0 / params.cap[j]
        J[ii, iv] = 1.0 / params.ind[j]
        J[ii, ii] = -params.res[j] / params.ind[j]
        J[ii, -1] = -1.0 / params.ind[j]
        J[-1, ii] = 1.0 / params.cap_load
    dcpl = 0.0 if v_load <= params.v_cpl_min else -params.p_load / v_load**2
    J[-1, -1] = (-1.0 / params.res_load - dcpl) / params.cap_load
    return J


def ctrl_matrix(params: GridParams) -> np.ndarray:
    n = params.n
    g = np.zeros((2 * n + 1, n))
    g[2 * np.arange(n), np.arange(n)] = 1.0 / params.cap
    return g


def vector_field(x: np.ndarray, u: np.ndarray, params: GridParams) -> np.ndarray:
    out = drift(x, params)
    out[0:-1:2] += np.asarray(u, dtype=float) / params.cap
    return out


def stored_energy(x: np.ndarray, params: GridParams) -> float:
    """Energy held in the capacitors and line inductors."""
    v, i_t = voltages(x), line_currents(x)
    return 0.5 * (np.dot(params.cap, v**2) + np.dot(params.ind, i_t**2) + params.cap_load * x[-1] ** 2)
