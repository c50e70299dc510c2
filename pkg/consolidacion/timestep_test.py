import math

import numpy as np
import pytest

from constitutive import PermeabilityLaw, PhysParams, WettingCurve
from errors import ConfigError, InvariantError, SolverError
from mesh import build_graded_grid
from timestep import (
    BoundaryData,
    SolverConfig,
    State,
    advance_one_step,
    check_step_restrictions,
    hydroxide_ledger,
    solve_hydroxide_step,
    solve_saturation_step,
    update_precipitate,
    water_ledger,
)
from transport import MollifierKernel


@pytest.fixture
def setup():
    grid = build_graded_grid(8, 1.0, 1.1)
    return {
        "grid": grid,
        "params": PhysParams(),
        "curve": WettingCurve.linear(0.0, 1.0),
        "law": PermeabilityLaw.constant(2e-2),
        "kernel": MollifierKernel(radius=0.2),
        "cfg": SolverConfig(final_time=1.0, steps=4),
    }


def uniform_state(grid, s, h=0.0, c_p=0.0):
    n = grid.n_nodes
    return State(s=np.full(n, s), h=np.full(n, h), c_p=np.full(n, c_p))


def fill_boundary():
    return BoundaryData(s_ext=(1.0, 0.0), h_ext=(1.0, 0.0), alpha=(1.0, 1.0), beta=(1.0, 0.0))


def step(setup, state, bc, **overrides):
    env = dict(setup, **overrides)
    return advance_one_step(state, bc, env["cfg"], env["params"], env["grid"], env["curve"], env["law"], env["kernel"], step=1)


@pytest.mark.parametrize(
    "final_time, steps, R, s_flat, satisfied",
    [
        (1.0, 3, 1.0, 0.5, True),
        (1.0, 2, 1.0, 0.5, False),
        (1.0, 21, 2.0, 0.1, True),
        (1.0, 20, 2.0, 0.1, False),
    ],
)
def test_step_restriction_examples(final_time, steps, R, s_flat, satisfied):
    report = check_step_restrictions(final_time, steps, R, s_flat)
    assert report.satisfied is satisfied
    assert bool(report) is satisfied
    assert not report.degenerate


def test_step_restriction_bounds():
    report = check_step_restrictions(2.0, 100, 3.0, 0.25)
    assert report.monotone_bound == 18.0
    assert report.lower_bound == 36.0
    assert report.contraction_bound == 36.0
    assert report.required == 36.0


def test_step_restriction_degenerate_without_saturation_floor():
    """s_flat = 0 makes the contraction bound infinite but leaves the s bounds usable"""
    report = check_step_restrictions(1.0, 1000, 1.0, 0.0)
    assert report.degenerate
    assert math.isinf(report.contraction_bound)
    assert not report.satisfied
    assert report.saturation_satisfied


def test_large_step_is_rejected(setup):
    state = uniform_state(setup["grid"], 0.5)
    cfg = SolverConfig(final_time=10.0, steps=1)
    with pytest.raises(ConfigError) as excinfo:
        solve_saturation_step(state, fill_boundary(), cfg, setup["params"], setup["grid"], setup["curve"], setup["law"])
    assert "time.steps" in excinfo.value.violations[0]


def test_solver_config_validation():
    with pytest.raises(ConfigError) as excinfo:
        SolverConfig(final_time=-1.0, steps=0, newton_tol=0.0)
    assert len(excinfo.value.violations) == 3
    assert SolverConfig(final_time=1000.0, steps=4000).tau == 0.25


def test_stationary_state_is_a_fixed_point(setup):
    """No reaction, exterior data equal to the uniform state: nothing moves"""
    params = PhysParams(gamma=0.0)
    state = uniform_state(setup["grid"], 0.5)
    bc = BoundaryData(s_ext=(0.5, 0.5), h_ext=(0.0, 0.0), alpha=(1.0, 1.0), beta=(1.0, 1.0))
    new, report = step(setup, state, bc, params=params)
    assert np.array_equal(new.s, state.s)
    assert np.array_equal(new.h, state.h)
    assert np.array_equal(new.c_p, state.c_p)
    assert report.newton_iterations == 0
    assert not report.truncation_active


def test_fill_step_stays_in_bounds_and_balances(setup):
    grid = setup["grid"]
    state = uniform_state(grid, 0.0)
    new, report = step(setup, state, fill_boundary())
    assert np.all(new.s >= -1e-12) and np.all(new.s <= 1.0 + 1e-12)
    assert np.all(new.h >= 0.0)
    assert np.all(new.h <= 1.0 + 1e-12)
    assert new.s[0] > new.s[-1]
    assert abs(report.water_ledger) <= 1e-8 * grid.n_nodes
    assert abs(report.hydroxide_ledger) <= 1e-8 * grid.n_nodes
    assert report.s_residual <= setup["cfg"].newton_tol
    assert new.t == setup["cfg"].tau


def test_hydroxide_enters_where_water_is_present(setup):
    grid = setup["grid"]
    state = uniform_state(grid, 0.6)
    new, report = step(setup, state, fill_boundary())
    assert new.h[0] > 0.0
    assert new.h[0] <= 1.0
    assert np.all(np.diff(new.h) <= 1e-15)
    assert abs(report.hydroxide_ledger) <= 1e-8 * grid.n_nodes


def test_outflow_boundary_is_inactive(setup):
    """h above the exterior value does not leave through the boundary term"""
    grid = setup["grid"]
    params = PhysParams(gamma=0.0)
    state = uniform_state(grid, 0.5, h=0.8)
    bc = BoundaryData(s_ext=(0.5, 0.5), h_ext=(0.0, 0.0), alpha=(1.0, 1.0), beta=(1.0, 1.0))
    result = solve_hydroxide_step(state.s, np.zeros(grid.n_nodes), state.h, bc, setup["cfg"], params, grid)
    assert np.allclose(result.values, 0.8, rtol=0, atol=1e-14)
    assert result.iterations == 1


def test_sealed_domain_conserves_mass(setup):
    """beta = alpha = 0 and no reaction: total water and hydroxide stay constant"""
    grid = setup["grid"]
    params = PhysParams(gamma=0.0)
    rng = np.random.default_rng(3)
    state = State(
        s=rng.uniform(0.1, 0.9, grid.n_nodes),
        h=rng.uniform(0.0, 1.0, grid.n_nodes),
        c_p=np.zeros(grid.n_nodes),
    )
    bc = BoundaryData(s_ext=(0.5, 0.5), h_ext=(1.0, 1.0), alpha=(0.0, 0.0), beta=(0.0, 0.0))
    water0 = np.sum(grid.masses * state.s)
    hydroxide0 = np.sum(grid.masses * state.h)
    for j in range(1, 9):
        state, _ = advance_one_step(
            state, bc, setup["cfg"], params, grid, setup["curve"], setup["law"], setup["kernel"], step=j
        )
    assert np.sum(grid.masses * state.s) == pytest.approx(water0, abs=1e-11)
    assert np.sum(grid.masses * state.h) == pytest.approx(hydroxide0, abs=1e-11)
    assert state.t == 2.0


def test_negative_saturation_is_an_invariant_error(setup):
    grid = setup["grid"]
    s = np.full(grid.n_nodes, 0.5)
    s[3] = -1e-6
    with pytest.raises(InvariantError):
        solve_hydroxide_step(s, np.zeros(grid.n_nodes), np.zeros(grid.n_nodes), fill_boundary(), setup["cfg"], setup["params"], grid)


def test_newton_failure_reports_residual(setup):
    grid = setup["grid"]
    cfg = SolverConfig(final_time=1.0, steps=4, newton_max_iter=1)
    curve = WettingCurve.tabulated([(0.0, 0.0), (0.2, 0.05), (0.6, 0.1), (1.0, 3.0)])
    state = uniform_state(grid, 0.1, h=1.0)
    with pytest.raises(SolverError) as excinfo:
        solve_saturation_step(state, fill_boundary(), cfg, setup["params"], grid, curve, setup["law"])
    assert excinfo.value.residual > cfg.newton_tol
    assert excinfo.value.iterations >= 1


def test_tabulated_curve_converges(setup):
    grid = setup["grid"]
    curve = WettingCurve.tabulated([(0.0, 0.0), (0.2, 0.05), (0.6, 0.1), (1.0, 3.0)])
    state = uniform_state(grid, 0.1, h=1.0)
    result = solve_saturation_step(state, fill_boundary(), setup["cfg"], setup["params"], grid, curve, setup["law"])
    assert result.residual <= setup["cfg"].newton_tol
    assert np.all(result.values <= 1.0 + 1e-12)
    ledger = water_ledger(result.values, state.s, state.h, fill_boundary(), setup["cfg"].tau, setup["params"], grid, curve)
    assert abs(ledger) <= 1e-10


def test_update_precipitate_never_decreases():
    c_p = np.array([0.0, 1.0, 2.0, 3.0])
    h = np.array([1.0, -1e-12, 0.5, 2.0])
    s = np.array([0.5, 0.5, 1.0 + 1e-12, -1e-12])
    new = update_precipitate(c_p, h, s, 0.25, 1e-2, 2.0)
    assert np.all(new >= c_p)
    assert new[0] == pytest.approx(0.25 * 1e-2 * 2.0 * 0.25)
    assert np.array_equal(new[1:], c_p[1:])


def test_hydroxide_ledger_counts_inflow(setup):
    """With no reaction the mass gain equals tau times the boundary inflow"""
    grid = setup["grid"]
    params = PhysParams(gamma=0.0)
    bc = fill_boundary()
    h_prev = np.zeros(grid.n_nodes)
    s_prev = np.full(grid.n_nodes, 0.5)
    h_new = np.zeros(grid.n_nodes)
    h_new[0] = 0.25
    inflow = 1.0 * 0.5 * (1.0 - 0.25)
    expected = grid.masses[0] * 0.25 - 0.25 * inflow
    assert hydroxide_ledger(h_new, h_prev, s_prev, bc, 0.25, params, grid) == pytest.approx(expected)
