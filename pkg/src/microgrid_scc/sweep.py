"""Seeded sweeps of initial states over several controllers."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .config import SweepSpec
from .equilibrium import closed_form_equilibrium
from .model import pack_state
from .simulation import Scenario, run

WORKERS_ENV = "MICROGRID_SCC_WORKERS"


def sample_initial_states(base: Scenario, spec: SweepSpec) -> np.ndarray:
    """``spec.samples`` states drawn from a ``numpy`` generator seeded with
    ``spec.seed``: converter voltages uniform in ``v_range`` (clipped to the
    interior of each safety box), line currents a random multiple of the
    equilibrium split and a uniform bus voltage."""
    p = base.params
    eq = closed_form_equilibrium(base.v_bus_target, p)
    rng = np.random.default_rng(spec.seed)
    lo = np.maximum(spec.v_range[0], p.v_safe_lo + 1e-3)
    hi = np.minimum(spec.v_range[1], p.v_safe_hi - 1e-3)
    states = np.empty((spec.samples, p.dim))
    for k in range(spec.samples):
        v = rng.uniform(lo, hi)
        it = eq.line_currents * rng.uniform(*spec.it_scale, size=p.n)
        v_load = rng.uniform(*spec.v_load_range)
        states[k] = pack_state(v, it, v_load)
    return states


def _one(job):
    idx, controller, scenario = job
    s = run(scenario).summary
    x0 = scenario.x0
    return {
        "run": idx,
        "controller": controller,
        "status": s.status,
        "converged": bool(s.converged),
        "safety_violated": bool(s.safety_violated),
        "min_b": float(s.min_b),
        "v_bus_avg": float(s.v_bus_avg),
        "v_bus_max_dev": float(s.v_bus_max_dev),
        "vL0": float(x0[-1]),
        "v0_min": float(x0[0:-1:2].min()),
        "v0_max": float(x0[0:-1:2].max()),
    }


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def run_sweep(
    base: Scenario,
    spec: SweepSpec,
    controllers: Sequence[str] = ("scc", "droop"),
    workers: int | None = None,
) -> list[dict]:
    """Records ordered by (run, controller position), independent of ``workers``."""
    states = sample_initial_states(base, spec)
    jobs = [
        (k, c, base.with_(x0=x0, controller=c, t_final=spec.t_final))
        for k, x0 in enumerate(states)
        for c in controllers
    ]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))
