"""Age propagation with frozen coefficients, the Duhamel operator and birth functionals.

The age direction is discretized by implicit Euler with coefficients taken at
the left node: with ``M_k = A_k + diag(mu_k)`` evaluated at age ``a_k``,

    (I + da M_k) u_{k+1} = u_k + da f_{k+1}.

Each step matrix is a diagonally dominant M-matrix, hence inverse-positive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ModelBallError, SelfConsistencyError, SingularStepError
from .grid import (AgeGrid, SpaceDiscretization, make_age_grid, make_space, solve_tridiagonal,
                   tridiagonal)
from .model import ModelSpec, State


@dataclass(frozen=True)
class Grid:
    ages: AgeGrid
    space: SpaceDiscretization

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ages.n_a + 1, self.space.n_x)


def make_grid(model: ModelSpec, n_a: int, n_x: int) -> Grid:
    return Grid(make_age_grid(model.a_max, n_a), make_space(model.length, n_x, model.bc))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Density on the (age x space) grid; row 0 is the trace ``u(0)``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: Grid) -> "DensityField":
        return cls(np.zeros(grid.shape), grid)

    @property
    def trace(self) -> np.ndarray:
        return self.values[0]

    @property
    def aggregate(self) -> np.ndarray:
        """``U(x)``: age quadrature of each column."""
        return self.grid.ages.quad_weights @ self.values

    @property
    def total_mass(self) -> float:
        return float(self.aggregate @ self.grid.space.mass_weights)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def state(self) -> State:
        return State.of(self.values, self.grid.ages.quad_weights)

    def __neg__(self) -> "DensityField":
        return DensityField(-self.values, self.grid)


@dataclass(frozen=True)
class Coefficients:
    """Model coefficients broadcast to the full ``(n_a + 1, n_x)`` grid."""

    mu: np.ndarray
    birth: np.ndarray  # includes birth_scale
    diff: np.ndarray
    drift: np.ndarray | None
    reaction: np.ndarray | None


def evaluate_coefficients(model: ModelSpec, field: DensityField) -> Coefficients:
    grid = field.grid
    shape = grid.shape
    state = field.state()
    a = grid.ages.nodes[:, None]
    x = grid.space.nodes

    def full(v):
        return np.broadcast_to(np.asarray(v, dtype=float), shape)

    mu = full(model.mu(state, a, x))
    birth = model.birth_scale * full(model.birth(state, a, x))
    diff = full(model.diff_coeff(state, x))
    drift = full(model.drift_coeff(state, x)) if model.has_drift else None
    reaction = full(model.reaction_coeff(state, x)) if model.has_reaction else None

    for label, arr in (("mu", mu), ("birth", birth), ("diff_coeff", diff),
                       ("drift_coeff", drift), ("reaction_coeff", reaction)):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise ModelBallError(f"{label} is not finite at the current state")
    if np.any(diff <= 0):
        raise ModelBallError("diffusion coefficient is not positive at the current state")
    if np.any(mu < 0) or np.any(birth < 0):
        raise ModelBallError("negative death or birth modulus at the current state")
    return Coefficients(mu, birth, diff, drift, reaction)


def spatial_operators(model: ModelSpec, field: DensityField):
    """Tridiagonal bands of ``A(u, a_k) + diag(mu(u, a_k))`` for every age node."""
    c = evaluate_coefficients(model, field)
    lower, diag, upper = tridiagonal(field.grid.space, c.diff, c.drift, c.reaction)
    return lower, diag + c.mu, upper


@dataclass(frozen=True)
class Propagator:
    """One-step solution operators ``S_k = (I + da M_k)^-1`` for ``k = 0..n_a-1``.

    Holds the tridiagonal step matrices ``I + da M_k`` (rows ``lower``, ``diag``,
    ``upper``) and their ``solve_banded`` packing; applying ``S_k`` is a
    tridiagonal solve.
    """

    grid: Grid
    lower: np.ndarray  # (n_a, n_x)
    diag: np.ndarray
    upper: np.ndarray
    packed: np.ndarray  # (n_a, 3, n_x)

    @classmethod
    def frozen_at(cls, model: ModelSpec, frozen: DensityField) -> "Propagator":
        lower, diag, upper = spatial_operators(model, frozen)
        da = frozen.grid.ages.step
        n_a = frozen.grid.ages.n_a
        lower, upper = da * lower[:n_a], da * upper[:n_a]
        diag = 1.0 + da * diag[:n_a]
        packed = np.zeros((n_a, 3, frozen.grid.space.n_x))
        packed[:, 0, 1:] = upper[:, :-1]
        packed[:, 1] = diag
        packed[:, 2, :-1] = lower[:, 1:]
        return cls(frozen.grid, lower, diag, upper, packed)

    def step(self, k: int, rhs: np.ndarray) -> np.ndarray:
        try:
            out = scipy.linalg.solve_banded((1, 1), self.packed[k], rhs, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularStepError(k, float(self.grid.ages.nodes[k])) from None
        if not np.all(np.isfinite(out)):
            raise SingularStepError(k, float(self.grid.ages.nodes[k]))
        return out

    def march(self, w0: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        """Rows ``u_0 = w0``, ``u_{k+1} = S_k (u_k + da source_{k+1})``.

        ``w0`` may be a vector or an ``(n_x, m)`` block of vectors.
        """
        n_a = self.grid.ages.n_a
        da = self.grid.ages.step
        w0 = np.asarray(w0, dtype=float)
        out = np.empty((n_a + 1,) + w0.shape)
        out[0] = w0
        for k in range(n_a):
            rhs = out[k] if source is None else out[k] + da * source[k + 1]
            out[k + 1] = self.step(k, rhs)
        return out

    def step_all(self, rows: np.ndarray) -> np.ndarray:
        """Apply ``S_k`` to ``rows[k]`` for every ``k`` at once (independent solves)."""
        return solve_tridiagonal(self.lower, self.diag, self.upper, rows)


def propagate(model: ModelSpec, frozen: DensityField, w0: np.ndarray) -> DensityField:
    """``u(a_k) = Pi_frozen(a_k, 0) w0`` by the implicit age march."""
    values = Propagator.frozen_at(model, frozen).march(w0)
    return DensityField(values, frozen.grid)


def duhamel(model: ModelSpec, f: DensityField) -> DensityField:
    """``(K0 f)(a_k)``: zero initial trace, coefficients frozen at the zero state."""
    prop = Propagator.frozen_at(model, DensityField.zeros(f.grid))
    values = prop.march(np.zeros(f.grid.space.n_x), source=f.values)
    return DensityField(values, f.grid)


class BirthVariant(enum.Enum):
    FULL = "full"
    LINEAR = "linear"
    REMAINDER = "remainder"


def birth_functional(model: ModelSpec, u: DensityField, variant="full") -> np.ndarray:
    """Age quadrature of ``b(state, a) u(a)``.

    ``full`` uses ``b(u)``, ``linear`` uses ``b(0)`` and ``remainder`` uses
    ``b(u) - b(0)``, so that full = linear + remainder.
    """
    variant = BirthVariant(variant)
    weights = u.grid.ages.quad_weights
    zero = DensityField.zeros(u.grid)
    if variant is BirthVariant.LINEAR:
        b = birth_modulus(model, zero)
    elif variant is BirthVariant.FULL:
        b = birth_modulus(model, u)
    else:
        b = birth_modulus(model, u) - birth_modulus(model, zero)
    return weights @ (b * u.values)


def birth_modulus(model: ModelSpec, field: DensityField) -> np.ndarray:
    state = field.state()
    b = model.birth(state, field.grid.ages.nodes[:, None], field.grid.space.nodes)
    return model.birth_scale * np.broadcast_to(np.asarray(b, dtype=float), field.grid.shape)


def self_consistent_field(model: ModelSpec, w: np.ndarray, start: DensityField,
                          tol: float = 1e-11, max_sweeps: int = 100) -> DensityField:
    """Solve ``u = propagate(model, u, w)`` by re-freezing coefficients.

    ``start`` supplies the grid and the first frozen state.
    """
    u = start.values
    grid = start.grid
    change = np.inf
    for _ in range(max_sweeps):
        new = Propagator.frozen_at(model, DensityField(u, grid)).march(w)
        change = float(np.max(np.abs(new - u)))
        u = new
        if change <= tol:
            return DensityField(u, grid)
    raise SelfConsistencyError(
        f"coefficient freezing did not settle after {max_sweeps} sweeps "
        f"(last change {change:.3e}); amplitude may exceed the model's validity ball"
    )
