import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agebif import BranchPoint, DensityField, EquilibriumSolver, local_expansion, propagate
from agebif.transient import TransientState, run_to_steady, step_transient

import oracles


@pytest.fixture(scope="module")
def neumann():
    model, grid = oracles.normalized("Neumann33", 100, 12)
    exp = local_expansion(model, grid)
    n0, u0 = exp.predict(0.1)
    point = EquilibriumSolver(model, grid, exp.spectral).solve(
        eps=0.1, guess=BranchPoint(0.1, n0, u0))
    return model, grid, exp, point


def test_zero_stays_zero(neumann):
    model, grid, _, _ = neumann
    state = run_to_steady(model, DensityField.zeros(grid), t_max=0.5, tol=-1.0, n=1.3)
    assert np.all(state.u.values == 0)
    assert len(state.residual_history) == 50


def test_time_step_locked(neumann):
    model, grid, _, _ = neumann
    with pytest.raises(ValueError, match="age step"):
        step_transient(model, TransientState(DensityField.zeros(grid)), 0.5 * grid.ages.step)
    with pytest.raises(ValueError):
        run_to_steady(model, DensityField.zeros(grid), t_max=0.0, tol=1e-6)


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=10, deadline=None)
def test_nonnegative_data_stays_nonnegative(seed):
    model, grid = oracles.normalized("Functional32", 40, 8)
    rng = np.random.default_rng(seed)
    u0 = DensityField(rng.uniform(0, 0.3, grid.shape) * (rng.uniform(size=grid.shape) < 0.5), grid)
    state = run_to_steady(model, u0, t_max=1.0, tol=-1.0, n=1.2)
    assert min(row[3] for row in state.residual_history) >= 0


def test_converges_to_branch_equilibrium(neumann):
    model, grid, _, point = neumann
    u0 = DensityField(point.u.values * 1.2 + 0.01, grid)
    state = run_to_steady(model, u0, t_max=80.0, tol=1e-9, n=point.n)
    assert np.max(np.abs(state.u.values - point.u.values)) <= 1e-3


def test_bump_flattens(neumann):
    model, grid, _, point = neumann
    bump = 1 + 0.5 * np.cos(np.pi * grid.space.nodes)
    state = run_to_steady(model, DensityField(point.u.values * bump, grid), t_max=40.0,
                          tol=1e-9, n=point.n)
    assert np.var(state.u.aggregate) <= 1e-4


def test_linear_equilibrium_is_fixed_point():
    model, grid = oracles.normalized("Neumann33", 80, 8, mu_slope=0.0, diff_slope=0.0)
    u = propagate(model, DensityField.zeros(grid), np.full(8, 0.2))
    state = step_transient(model, TransientState(u, 0.0, 1.0), grid.ages.step)
    assert state.residual <= 1e-10


def test_history_rows(neumann):
    model, grid, exp, point = neumann
    state = run_to_steady(model, point.u, t_max=0.1, tol=-1.0, n=point.n)
    t = [row[0] for row in state.residual_history]
    assert np.allclose(np.diff(t), grid.ages.step)
    assert state.t == pytest.approx(0.1)
    assert all(row[2] > 0 for row in state.residual_history)
