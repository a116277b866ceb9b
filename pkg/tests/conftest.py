import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from microgrid_scc.equilibrium import closed_form_equilibrium  # noqa: E402
from microgrid_scc.model import GridParams, pack_state, table1_params  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return table1_params()


@pytest.fixture(scope="session")
def eq(grid):
    return closed_form_equilibrium(24.0, grid)


def random_grid(rng, n=None, p_load=None, res_load=None):
    n = int(rng.integers(1, 7)) if n is None else n
    return GridParams(
        cap=rng.uniform(0.2, 1.0, n) * 1e-3,
        res=rng.uniform(5.0, 40.0, n) * 1e-3,
        ind=rng.uniform(0.05, 0.2, n) * 1e-3,
        cap_load=rng.uniform(0.2, 1.0) * 1e-3,
        res_load=rng.uniform(0.5, 5.0) if res_load is None else res_load,
        p_load=rng.uniform(0.0, 3000.0) if p_load is None else p_load,
    )


def random_state(rng, params, eq=None, v_load=(8.0, 45.0), spread=1.0):
    """Interior state, optionally perturbed around ``eq``."""
    n = params.n
    if eq is None:
        v = rng.uniform(params.v_safe_lo + 0.5, params.v_safe_hi - 0.5)
        it = rng.uniform(-40, 80, n)
        vl = rng.uniform(*v_load)
    else:
        v = np.clip(eq.x_star[0:-1:2] + spread * rng.normal(0, 3, n), params.v_safe_lo + 0.5, params.v_safe_hi - 0.5)
        it = eq.line_currents + spread * rng.normal(0, 5, n)
        vl = eq.v_bus_target + spread * rng.normal(0, 2)
    return pack_state(v, it, vl)


def random_qp(rng, dim=None, rows=None):
    """Feasible QP with a diagonal weight, built around an anchor point that
    satisfies every row.  About one row in five passes exactly through the
    anchor, which produces degenerate active sets."""
    dim = int(rng.integers(1, 7)) if dim is None else dim
    rows = int(rng.integers(0, 5)) if rows is None else rows
    h = rng.uniform(0.1, 10.0, dim)
    c = rng.normal(0, 3, dim)
    anchor = rng.normal(0, 1, dim)
    A = rng.normal(0, 1, (rows, dim))
    slack = rng.uniform(0.0, 1.0, rows) * (rng.random(rows) > 0.2)
    r = A @ anchor + slack
    return h, c, A, r


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
