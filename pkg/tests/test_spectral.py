import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agebif import assemble_q0, kernel_simplicity_check, principal_pair
from agebif.errors import SimplicityError, SpectralError
from agebif.spectral import require_simple

import oracles


def test_two_by_two():
    sd = principal_pair(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert sd.r == pytest.approx(3.0, rel=1e-12)
    assert np.allclose(sd.B, 1.0) and np.allclose(sd.psi, 0.5)


@given(n=st.integers(2, 12), seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_random_positive_matrix(n, seed):
    Q = np.random.default_rng(seed).uniform(0.05, 1.0, (n, n))
    sd = principal_pair(Q)
    assert sd.r == pytest.approx(np.max(np.abs(np.linalg.eigvals(Q))), rel=1e-10)
    assert principal_pair(Q.T).r == pytest.approx(sd.r, rel=1e-10)
    assert sd.B.min() > 0 and sd.psi @ sd.B == pytest.approx(1.0)
    lo, hi = sd.bounds[-1]
    assert lo <= sd.r * (1 + 1e-12) and hi >= sd.r * (1 - 1e-12)
    # Collatz-Wielandt bracket tightens monotonically
    assert np.all(np.diff(sd.bounds[:, 0]) >= -1e-12) and np.all(np.diff(sd.bounds[:, 1]) <= 1e-12)


def test_zero_matrix_refused():
    with pytest.raises(SpectralError):
        principal_pair(np.zeros((3, 3)))


def test_negative_entries_warn():
    Q = np.array([[2.0, -0.1], [0.5, 1.0]])
    with pytest.warns(RuntimeWarning, match="negative"):
        principal_pair(Q)


def test_double_eigenvalue_refused():
    Q = np.diag([1.0, 1.0, 0.5])
    assert kernel_simplicity_check(Q).dim_kernel == 2
    with pytest.raises(SimplicityError, match="dim_kernel=2"):
        require_simple(Q)
    assert kernel_simplicity_check(np.zeros((3, 3))).dim_kernel == 0


@pytest.mark.parametrize("name", ["Robin31", "Functional32", "Neumann33"])
def test_normalized_presets(name):
    model, grid = oracles.normalized(name, 200, 16)
    Q0 = assemble_q0(model, grid)
    sd = principal_pair(Q0)
    assert abs(sd.r - 1) <= 1e-10
    assert np.max(np.abs(sd.psi @ (np.eye(16) - Q0))) <= 1e-10
    assert sd.B.min() > 0 and np.max(sd.B) == pytest.approx(1.0)
    assert kernel_simplicity_check(Q0).simple


def test_scales_match_discrete_oracles():
    model, _ = oracles.normalized("Neumann33", 300, 8)
    assert model.birth_scale == pytest.approx(1 / oracles.survival_sum(1.0, 300), rel=1e-12)
    model, _ = oracles.normalized("Robin31", 300, 20, bc_left="dirichlet", bc_right="dirichlet")
    assert model.birth_scale == pytest.approx(oracles.dirichlet_scale_discrete(0.1, 300, 20),
                                              rel=1e-10)


def test_neumann_left_vector_is_mass():
    model, grid = oracles.normalized("Neumann33", 100, 10)
    sd = principal_pair(assemble_q0(model, grid))
    assert np.allclose(sd.psi, grid.space.mass_weights / grid.space.mass_weights.sum(), atol=1e-10)
