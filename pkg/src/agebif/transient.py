"""Time integration of the full age-structured evolution problem.

The time step is locked to the age step, so transport along characteristics
is an exact index shift.  One step, with coefficients frozen at the current
field ``u``:

    new[k+1] = (I + dt M_k(u))^-1 u[k]            k = 0..n_a-1
    new[0]   = n * sum_k q_k b_k(u) new[k]

The renewal row appears on both sides through ``k = 0`` and is solved for
pointwise.  A discrete equilibrium of the bifurcation module is therefore an
exact fixed point of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .evolution import DensityField, Propagator, birth_modulus
from .model import ModelSpec


@dataclass(frozen=True)
class TransientState:
    u: DensityField
    t: float = 0.0
    n: float = 1.0
    # rows of (t, steady residual, total mass, min u)
    residual_history: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residual_history[-1][1] if self.residual_history else math.inf


def step_transient(model: ModelSpec, state: TransientState, dt: float) -> TransientState:
    """Advance one time step ``dt``, which must equal the age step."""
    u = state.u
    grid = u.grid
    if not math.isclose(dt, grid.ages.step, rel_tol=1e-12):
        raise ValueError(f"dt = {dt} must equal the age step {grid.ages.step}")
    prop = Propagator.frozen_at(model, u)
    new = np.empty_like(u.values)
    new[1:] = prop.step_all(u.values[:-1])
    if not np.all(np.isfinite(new[1:])):
        raise SolverError("singular step matrix in transient update")

    weighted = grid.ages.quad_weights[:, None] * birth_modulus(model, u)
    denom = 1.0 - state.n * weighted[0]
    if np.any(denom <= 0):
        raise SolverError("renewal row is not solvable; reduce the time step or n")
    new[0] = state.n * np.sum(weighted[1:] * new[1:], axis=0) / denom

    residual = float(np.max(np.abs(new - u.values))) / dt
    field_new = DensityField(new, grid)
    t = state.t + dt
    row = (t, residual, field_new.total_mass, float(new.min()))
    return TransientState(field_new, t, state.n, state.residual_history + [row])


def run_to_steady(model: ModelSpec, u0: DensityField, t_max: float, tol: float,
                  n: float = 1.0, max_steps: int | None = None) -> TransientState:
    """Step until the steady residual drops to ``tol`` or time reaches ``t_max``.

    Not reaching ``tol`` is a recorded outcome: inspect ``state.residual``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    dt = u0.grid.ages.step
    state = TransientState(u0, 0.0, n, [])
    limit = math.ceil(t_max / dt - 1e-9)
    if max_steps is not None:
        limit = min(limit, max_steps)
    history = []
    for _ in range(limit):
        state = step_transient(model, TransientState(state.u, state.t, n, []), dt)
        history.extend(state.residual_history)
        if state.residual <= tol:
            break
    return TransientState(state.u, state.t, n, history)
