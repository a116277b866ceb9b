"""Output coordinates, output dynamics and the feedback-linearising law.

Outputs:

* ``h_0 = v_L - v_L*`` (relative degree three),
* ``h_j = v_j - v_{j+1}`` for ``j = 1 .. n-1`` (relative degree one).

The output state is ``eta = (h_0, L_f h_0, L_f^2 h_0, h_1, ..., h_{n-1})`` and
the internal (zero-dynamics) coordinates are ``z_j = R_j i_tj - R_{j+1} i_t,j+1``.
All Lie derivatives are closed-form and valid on the smooth CPL branch
``v_L > V_min`` where the load current is ``P_L / v_L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_continuous_are

from .equilibrium import Equilibrium
from .errors import CplSaturated, IllConditionedDecoupling
from .model import GridParams

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class OutputCoords:
    eta: np.ndarray
    zee: np.ndarray
    jac: np.ndarray


@dataclass(frozen=True, eq=False)
class OutputDynamics:
    f_eta: np.ndarray
    g_eta: np.ndarray

    @property
    def f_eta_reduced(self) -> np.ndarray:
        return self.f_eta[2:]

    @property
    def g_eta_reduced(self) -> np.ndarray:
        return self.g_eta[2:]


@dataclass(frozen=True, eq=False)
class BrunovskyPair:
    F: np.ndarray
    G: np.ndarray
    K: np.ndarray

    @property
    def A_cl(self) -> np.ndarray:
        return self.F + self.G @ self.K


@dataclass(frozen=True, eq=False)
class LieTerms:
    """Everything the controllers need from one state evaluation."""

    eta: np.ndarray
    zee: np.ndarray
    f_eta: np.ndarray
    g_eta: np.ndarray
    # pieces reused by the Jacobian
    a: float
    dphi: float
    ddphi: float


def lie_terms(x: np.ndarray, eq: Equilibrium, params: GridParams) -> LieTerms:
    n = params.n
    v = x[0:-1:2]
    i_t = x[1:-1:2]
    v_load = float(x[-1])
    if v_load <= params.v_cpl_min:
        raise CplSaturated(f"v_L = {v_load:.6g} V is at or below the CPL cutoff {params.v_cpl_min} V")
    cap, res, ind = params.cap, params.res, params.ind
    c_load, r_load, p_load = params.cap_load, params.res_load, params.p_load

    # net load characteristic phi(v) = -v/R_L - P_L/v and its derivatives
    phi = -v_load / r_load - p_load / v_load
    dphi = -1.0 / r_load + p_load / v_load**2
    ddphi = -2.0 * p_load / v_load**3

    di = (v - res * i_t - v_load) / ind
    a = (i_t.sum() + phi) / c_load
    b = (di.sum() + dphi * a) / c_load
    c = (np.sum((-i_t / cap - res * di - a) / ind) + ddphi * a * a + dphi * b) / c_load

    eta = np.empty(n + 2)
    eta[0] = v_load - eq.v_bus_target
    eta[1] = a
    eta[2] = b
    eta[3:] = v[:-1] - v[1:]

    f_eta = np.empty(n + 2)
    f_eta[0] = a
    f_eta[1] = b
    f_eta[2] = c
    dv = -i_t / cap
    f_eta[3:] = dv[:-1] - dv[1:]

    g_eta = np.zeros((n + 2, n))
    g_eta[2] = 1.0 / (c_load * ind * cap)
    if n > 1:
        rows = np.arange(n - 1)
        g_eta[3 + rows, rows] = 1.0 / cap[:-1]
        g_eta[3 + rows, rows + 1] = -1.0 / cap[1:]

    w = res * i_t
    zee = w[:-1] - w[1:]
    return LieTerms(eta=eta, zee=zee, f_eta=f_eta, g_eta=g_eta, a=a, dphi=dphi, ddphi=ddphi)


def _coords_jacobian(t: LieTerms, params: GridParams) -> np.ndarray:
    n = params.n
    dim = 2 * n + 1
    cap_l = params.cap_load
    iv = 2 * np.arange(n)
    ii = iv + 1
    J = np.zeros((dim, dim))
    J[0, -1] = 1.0
    J[1, ii] = 1.0 / cap_l
    J[1, -1] = t.dphi / cap_l
    J[2, iv] = 1.0 / (cap_l * params.ind)
    J[2, ii] = (-params.res / params.ind + t.dphi / cap_l) / cap_l
    J[2, -1] = (-np.sum(1.0 / params.ind) + t.ddphi * t.a + t.dphi**2 / cap_l) / cap_l
    for j in range(n - 1):
        J[3 + j, iv[j]] = 1.0
        J[3 + j, iv[j + 1]] = -1.0
        J[n + 2 + j, ii[j]] = params.res[j]
        J[n + 2 + j, ii[j + 1]] = -params.res[j + 1]
    return J


def outputs(x: np.ndarray, eq: Equilibrium, params: GridParams) -> OutputCoords:
    t = lie_terms(x, eq, params)
    return OutputCoords(eta=t.eta, zee=t.zee, jac=_coords_jacobian(t, params))


def check_decoupling(g_eta_reduced: np.ndarray) -> float:
    cond = np.linalg.cond(g_eta_reduced)
    if not cond < COND_LIMIT:
        raise IllConditionedDecoupling(f"decoupling matrix condition number {cond:.3g}")
    return cond


def output_dynamics(x: np.ndarray, eq: Equilibrium, params: GridParams) -> OutputDynamics:
    t = lie_terms(x, eq, params)
    check_decoupling(t.g_eta[2:])
    return OutputDynamics(f_eta=t.f_eta, g_eta=t.g_eta)


# linear design in output coordinates


def default_poles(n: int) -> tuple[float, ...]:
    return (-2e3, -4e3, -6e3) + (-2e3,) * (n - 1)


def brunovsky_structure(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Integrator chain of length three for ``h_0`` plus ``n - 1`` scalar
    integrators, one per voltage-difference output."""
    F = np.zeros((n + 2, n + 2))
    F[0, 1] = F[1, 2] = 1.0
    G = np.zeros((n + 2, n))
    G[2:, :] = np.eye(n)
    return F, G


def controllability_matrix(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    blocks = [G]
    for _ in range(F.shape[0] - 1):
        blocks.append(F @ blocks[-1])
    return np.hstack(blocks)


def make_brunovsky(
    n: int,
    poles: Sequence[complex] | None = None,
    lqr: tuple[np.ndarray, np.ndarray] | None = None,
) -> BrunovskyPair:
    """Build ``(F, G)`` and a stabilising gain ``K``.

    ``poles`` lists ``n + 2`` closed-loop poles: the first three are placed on
    the ``h_0`` chain by matching its characteristic polynomial (complex poles
    must come in conjugate pairs), the remaining ``n - 1`` must be real and go
    one per scalar channel.  Alternatively ``lqr=(Q, R)`` designs ``K`` from
    the algebraic Riccati equation.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    F, G = brunovsky_structure(n)
    if lqr is not None:
        if poles is not None:
            raise ValueError("give either poles or lqr weights, not both")
        Qw, Rw = (np.atleast_2d(np.asarray(m, dtype=float)) for m in lqr)
        P = solve_continuous_are(F, G, Qw, Rw)
        K = -np.linalg.solve(Rw, G.T @ P)
        return BrunovskyPair(F=F, G=G, K=K)

    poles = np.asarray(default_poles(n) if poles is None else poles, dtype=complex)
    if poles.size != n + 2:
        raise ValueError(f"expected {n + 2} poles, got {poles.size}")
    if np.any(poles.real >= 0):
        raise ValueError("all poles must have strictly negative real part")
    chain, rest = poles[:3], poles[3:]
    coeffs = np.poly(chain)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * np.max(np.abs(coeffs)):
        raise ValueError("complex chain poles must come in conjugate pairs")
    if np.any(np.abs(rest.imag) > 0):
        raise ValueError("scalar-channel poles must be real")
    K = np.zeros((n, n + 2))
    # s^3 + c2 s^2 + c1 s + c0  <->  row (-c0, -c1, -c2)
    K[0, :3] = -coeffs.real[:0:-1]
    for j, p in enumerate(rest.real, start=1):
        K[j, j + 2] = p
    return BrunovskyPair(F=F, G=G, K=K)


def feedback_linearizing_control(
    x: np.ndarray, eq: Equilibrium, brunovsky: BrunovskyPair, params: GridParams
) -> np.ndarray:
    t = lie_terms(x, eq, params)
    return fl_from_terms(t, brunovsky)


def fl_from_terms(t: LieTerms, brunovsky: BrunovskyPair) -> np.ndarray:
    g_red = t.g_eta[2:]
    check_decoupling(g_red)
    return np.linalg.solve(g_red, -t.f_eta[2:] + brunovsky.K @ t.eta)
