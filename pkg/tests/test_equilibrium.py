import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_grid
from oracles import equilibrium_by_optimizer
from microgrid_scc.equilibrium import (
    closed_form_equilibrium,
    line_loss,
    load_current,
    oracle_equilibrium,
)
from microgrid_scc.model import vector_field

# Frozen from an independent mpmath evaluation at 30 digits of the
# loss-minimising split for the reference grid at a 24 V bus.
REFERENCE_CURRENTS = [33.8945801250375, 16.7375935600579, 17.7350663586311, 15.0452180737022, 10.7125418825713]
REFERENCE_TERMINAL = 24.2975944134978


def test_reference_split(grid, eq):
    np.testing.assert_allclose(eq.line_currents, REFERENCE_CURRENTS, rtol=1e-10)
    assert eq.terminal_voltage == pytest.approx(REFERENCE_TERMINAL, rel=1e-11)
    assert eq.line_currents.sum() == pytest.approx(24 / 1.5 + 1875 / 24, abs=1e-9)


def test_equal_terminal_voltages_and_u_star(eq):
    v = eq.x_star[0:-1:2]
    assert np.all(v == v[0])
    np.testing.assert_array_equal(eq.u_star, eq.line_currents)


def test_kkt_oracle_agrees(grid, eq):
    other = oracle_equilibrium(24.0, grid)
    np.testing.assert_allclose(other.x_star, eq.x_star, rtol=1e-12)


def test_generic_optimizer_agrees(grid, eq):
    split = equilibrium_by_optimizer(grid.res, load_current(24.0, grid))
    np.testing.assert_allclose(split, eq.line_currents, rtol=1e-6)


def test_rejects_target_at_or_below_cutoff(grid):
    with pytest.raises(ValueError):
        closed_form_equilibrium(grid.v_cpl_min, grid)
    with pytest.raises(ValueError):
        oracle_equilibrium(1.0, grid)


@given(st.integers(0, 10_000), st.floats(1.5, 20.0))
def test_equilibrium_is_a_fixed_point(seed, ratio):
    rng = np.random.default_rng(seed)
    p = random_grid(rng)
    target = min(ratio * p.v_cpl_min, 100.0)
    e = closed_form_equilibrium(target, p)
    scale = 1 + np.abs(e.x_star).max() / min(p.cap.min(), p.ind.min(), p.cap_load)
    assert np.abs(vector_field(e.x_star, e.u_star, p)).max() <= 1e-9 * scale


@given(st.integers(0, 10_000))
def test_split_minimises_loss_against_feasible_perturbations(seed):
    rng = np.random.default_rng(seed)
    p = random_grid(rng, n=int(rng.integers(2, 7)))
    e = closed_form_equilibrium(24.0, p)
    d = rng.normal(size=p.n)
    d -= d.mean()  # keep the total current
    assert line_loss(e.line_currents + 0.1 * d, p) >= line_loss(e.line_currents, p)


@given(st.integers(0, 10_000))
def test_sharing_inverse_to_resistance(seed):
    rng = np.random.default_rng(seed)
    p = random_grid(rng)
    e = closed_form_equilibrium(30.0, p)
    drops = p.res * e.line_currents
    np.testing.assert_allclose(drops, drops[0], rtol=1e-12)
