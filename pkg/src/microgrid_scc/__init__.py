"""CLF/CBF quadratic-program control of a single-bus DC microgrid with a
constant-power load, a droop baseline, and a fixed-step closed-loop simulator."""

from .certificates import CbfCertificate, ClfCertificate, build_clf, solve_lyapunov
from .controllers import DroopConfig, SccConfig, default_droop, droop_step, scc_step
from .equilibrium import Equilibrium, closed_form_equilibrium, oracle_equilibrium
from .errors import (
    ConfigError,
    CplSaturated,
    IllConditionedDecoupling,
    MicrogridError,
    OutsideSafeSet,
    QpError,
    QpIllConditioned,
    QpInfeasible,
)
from .linearization import feedback_linearizing_control, make_brunovsky, output_dynamics, outputs
from .model import GridParams, drift, ctrl_matrix, pack_state, table1_params, vector_field
from .qpsolve import QpProblem, QpSolution, solve_qp
from .simulation import Scenario, Trace, integrate_step, run, table2_initial_state

__version__ = "0.1.0"

__all__ = [
    "CbfCertificate", "ClfCertificate", "ConfigError", "CplSaturated", "DroopConfig", "Equilibrium",
    "GridParams", "IllConditionedDecoupling", "MicrogridError", "OutsideSafeSet", "QpError",
    "QpIllConditioned", "QpInfeasible", "QpProblem", "QpSolution", "Scenario", "SccConfig", "Trace",
    "build_clf", "closed_form_equilibrium", "ctrl_matrix", "default_droop", "drift", "droop_step",
    "feedback_linearizing_control", "integrate_step", "make_brunovsky", "oracle_equilibrium",
    "output_dynamics", "outputs", "pack_state", "run", "scc_step", "solve_lyapunov", "solve_qp",
    "table1_params", "table2_initial_state", "vector_field",
]
