import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agebif import DensityField, build_preset, make_grid, symmetrize
from agebif.errors import ModelError
from agebif.evolution import evaluate_coefficients, spatial_operators

BASE = {"a_max": 1.0, "mu0": 1.0, "d": 0.1}


def test_neumann33_example_coefficients():
    m = build_preset("Neumann33", BASE)
    grid = make_grid(m, 10, 6)
    zero = evaluate_coefficients(m, DensityField.zeros(grid))
    assert np.all(zero.mu == 1.0) and np.all(zero.birth == 1.0) and np.all(zero.diff == 0.1)
    u = DensityField(np.full(grid.shape, 0.5), grid)  # U = 0.5
    c = evaluate_coefficients(m, u)
    assert np.allclose(c.mu, 1.5) and np.allclose(c.diff, 0.1 * 1.25)
    assert m.bc.is_neumann


def test_robin31_rejects_negative_nu0():
    with pytest.raises(ModelError, match="nu0"):
        build_preset("Robin31", {"nu0": -1})


@pytest.mark.parametrize("params,match", [
    ({"a_max": 1.0, "mu0": 1.0}, "requires"),
    ({**BASE, "a_max": 0.0}, "a_max"),
    ({**BASE, "d": -0.1}, "'d'"),
    ({**BASE, "colour": 1.0}, "unknown parameters"),
])
def test_preset_validation(params, match):
    with pytest.raises(ModelError, match=match):
        build_preset("Functional32", params)


def test_unknown_preset():
    with pytest.raises(ModelError, match="unknown preset"):
        build_preset("Example99", BASE)


def test_supercritical_test_eligibility_flags():
    assert "zzz_eligible" in build_preset("Functional32", BASE).flags
    assert "zzz_eligible" not in build_preset("Functional32", {**BASE, "reaction": -1.0}).flags
    assert "zzz_eligible" not in build_preset("Robin31", {**BASE, "drift": 0.5}).flags


def test_dependence_channels():
    loc = build_preset("Robin31", BASE)
    agg = build_preset("Functional32", BASE)
    grid = make_grid(loc, 10, 6)
    u = np.zeros(grid.shape)
    u[3] = 1.0  # one cohort only
    f = DensityField(u, grid)
    mu_loc = evaluate_coefficients(loc, f).mu
    mu_agg = evaluate_coefficients(agg, f).mu
    assert mu_loc[3, 0] == pytest.approx(2.0) and mu_loc[2, 0] == pytest.approx(1.0)
    assert np.allclose(mu_agg, 1.0 + grid.ages.step)  # U = da for every age


def test_symmetrize_zero_state_unchanged():
    m = build_preset("Neumann33", BASE)
    s = symmetrize(m)
    grid = make_grid(m, 10, 6)
    z = DensityField.zeros(grid)
    a, b = evaluate_coefficients(m, z), evaluate_coefficients(s, z)
    assert np.array_equal(a.mu, b.mu) and np.array_equal(a.diff, b.diff)
    assert "symmetric" in s.flags


@pytest.mark.parametrize("name", ["Robin31", "Functional32", "Neumann33"])
@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_symmetrized_operators_equal_at_plus_minus(name, seed):
    s = symmetrize(build_preset(name, BASE))
    grid = make_grid(s, 10, 6)
    u = np.random.default_rng(seed).uniform(-0.5, 0.5, grid.shape)
    plus = spatial_operators(s, DensityField(u, grid))
    minus = spatial_operators(s, DensityField(-u, grid))
    for p, m in zip(plus, minus):
        assert np.array_equal(p, m)


def test_symmetrize_uses_absolute_aggregate():
    s = symmetrize(build_preset("Neumann33", BASE))
    grid = make_grid(s, 10, 6)
    u = DensityField(np.full(grid.shape, -0.4), grid)
    assert np.allclose(evaluate_coefficients(s, u).mu, 1.4)


def test_with_birth_scale_validates():
    m = build_preset("Neumann33", BASE)
    assert m.with_birth_scale(2.0).birth_scale == 2.0
    with pytest.raises(ModelError):
        m.with_birth_scale(0.0)
