"""Model data for age-structured populations with nonlinear diffusion.

A model is a bundle of coefficient callbacks evaluated on the whole
(age x space) grid at once.  Every callback receives a :class:`State` holding
the discrete density ``u`` (shape ``(n_a + 1, n_x)``) and its age aggregate
``U`` (shape ``(n_x,)``); the mortality and birth callbacks additionally get
the age column ``a`` (shape ``(n_a + 1, 1)``) and node row ``x`` (shape
``(n_x,)``).  Results must broadcast to ``(n_a + 1, n_x)``.

``birth`` returns the raw fertility shape; the effective modulus is
``birth_scale * birth(...)``.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, NamedTuple

import numpy as np

from .errors import ModelError
from .grid import Boundary, BoundaryConditions


class Dependence(enum.Enum):
    LOCAL_IN_AGE = "LocalInAge"
    AGGREGATED = "Aggregated"


class State(NamedTuple):
    u: np.ndarray
    U: np.ndarray
    weights: np.ndarray  # age quadrature weights used to form U

    @classmethod
    def of(cls, u: np.ndarray, weights: np.ndarray) -> "State":
        return cls(u, weights @ u, weights)


Callback = Callable[..., Any]


def _zero(state, x):
    return 0.0


@dataclass(frozen=True)
class ModelSpec:
    a_max: float
    mu: Callback                  # (state, a, x) -> death modulus
    birth: Callback               # (state, a, x) -> raw birth modulus
    diff_coeff: Callback          # (state, x) -> diffusion coefficient, > 0
    bc: BoundaryConditions = field(default_factory=BoundaryConditions)
    drift_coeff: Callback = _zero
    reaction_coeff: Callback = _zero
    dependence: Dependence = Dependence.AGGREGATED
    birth_scale: float = 1.0
    length: float = 1.0
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    flags: frozenset = frozenset()
    has_drift: bool = False
    has_reaction: bool = False

    def __post_init__(self):
        if not self.a_max > 0:
            raise ModelError(f"a_max must be positive, got {self.a_max}")
        if not self.birth_scale > 0:
            raise ModelError(f"birth_scale must be positive, got {self.birth_scale}")
        if not self.length > 0:
            raise ModelError(f"domain length must be positive, got {self.length}")

    def with_birth_scale(self, scale: float) -> "ModelSpec":
        return dataclasses.replace(self, birth_scale=float(scale))


def _positive(params, key):
    if key in params and not params[key] > 0:
        raise ModelError(f"parameter {key!r} must be positive, got {params[key]}")


def _boundary(kind: str, nu0: float) -> Boundary:
    if kind == "robin":
        return Boundary("robin", nu0)
    return Boundary(kind)


# required keys and defaults for each preset
PRESET_KEYS = {
    "Robin31": (("a_max", "mu0", "d"),
                {"length": 1.0, "nu0": 1.0, "bc_left": "dirichlet", "bc_right": "robin",
                 "mu_slope": 1.0, "diff_slope": 1.0, "reaction": 0.0, "drift": 0.0,
                 "birth_slope": 0.0}),
    "Functional32": (("a_max", "mu0", "d"),
                     {"length": 1.0, "nu0": 1.0, "bc_left": "robin", "bc_right": "robin",
                      "mu_slope": 1.0, "diff_slope": 1.0, "reaction": 1.0,
                      "birth_slope": 0.0}),
    "Neumann33": (("a_max", "mu0", "d"),
                  {"length": 1.0, "mu_slope": 1.0, "diff_slope": 1.0, "birth_slope": 0.0}),
}

# parameters the CLI uses when a config omits them
DEFAULT_PARAMS = {
    "Robin31": {"a_max": 1.0, "mu0": 1.0, "d": 0.1},
    "Functional32": {"a_max": 1.0, "mu0": 1.0, "d": 0.1},
    "Neumann33": {"a_max": 1.0, "mu0": 1.0, "d": 0.1},
}


def build_preset(name: str, params: Mapping[str, Any]) -> ModelSpec:
    """Construct one of the three example families.

    ``Robin31``
        Coefficients depend on the local density ``u(a, x)``:
        ``mu = mu0 + mu_slope*u``, ``diff = d*(1 + diff_slope*u**2)``,
        ``a0 = reaction*u**2``, ``a1 = drift*u``, ``b = exp(-birth_slope*u)``.
        Each end is ``dirichlet``, ``robin`` (coefficient ``nu0``) or ``neumann``.
    ``Functional32``
        Same forms with ``u`` replaced by the aggregate ``U`` and no drift.
    ``Neumann33``
        ``mu = mu0 + mu_slope*U``, ``diff = d*(1 + diff_slope*U**2)``,
        ``b = exp(-birth_slope*U)``, no-flux ends.
    """
    if name not in PRESET_KEYS:
        raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESET_KEYS)}")
    required, defaults = PRESET_KEYS[name]
    unknown = set(params) - set(required) - set(defaults)
    if unknown:
        raise ModelError(f"unknown parameters for {name}: {sorted(unknown)}")
    # value checks come first so a bad nu0 is reported even if other keys are absent
    if "nu0" in params and params["nu0"] < 0:
        raise ModelError(f"nu0 must be >= 0, got {params['nu0']}")
    for key in ("a_max", "d", "length", "mu0"):
        _positive(params, key)
    missing = [k for k in required if k not in params]
    if missing:
        raise ModelError(f"preset {name} requires parameters {missing}")
    p = {**defaults, **{k: float(v) if not isinstance(v, str) else v for k, v in params.items()}}

    mu0, d = p["mu0"], p["d"]
    ms, ds, bs = p["mu_slope"], p["diff_slope"], p["birth_slope"]

    if name == "Neumann33":
        return ModelSpec(
            a_max=p["a_max"], length=p["length"], name=name, params=p,
            mu=lambda s, a, x: mu0 + ms * s.U,
            birth=lambda s, a, x: np.exp(-bs * s.U),
            diff_coeff=lambda s, x: d * (1.0 + ds * s.U ** 2),
            bc=BoundaryConditions.uniform("neumann"),
            dependence=Dependence.AGGREGATED,
            flags=frozenset({"zzz_eligible"}),
        )

    for side in ("bc_left", "bc_right"):
        if p[side] not in ("dirichlet", "robin", "neumann"):
            raise ModelError(f"{side} must be dirichlet, robin or neumann, got {p[side]!r}")
    bc = BoundaryConditions(_boundary(p["bc_left"], p["nu0"]), _boundary(p["bc_right"], p["nu0"]))
    react = p["reaction"]

    if name == "Robin31":
        drift = p["drift"]
        return ModelSpec(
            a_max=p["a_max"], length=p["length"], name=name, params=p, bc=bc,
            mu=lambda s, a, x: mu0 + ms * s.u,
            birth=lambda s, a, x: np.exp(-bs * s.u),
            diff_coeff=lambda s, x: d * (1.0 + ds * s.u ** 2),
            reaction_coeff=lambda s, x: react * s.u ** 2,
            drift_coeff=lambda s, x: drift * s.u,
            has_reaction=react != 0, has_drift=drift != 0,
            dependence=Dependence.LOCAL_IN_AGE,
            flags=frozenset({"zzz_eligible"} if react >= 0 and drift == 0 else ()),
        )

    return ModelSpec(
        a_max=p["a_max"], length=p["length"], name=name, params=p, bc=bc,
        mu=lambda s, a, x: mu0 + ms * s.U,
        birth=lambda s, a, x: np.exp(-bs * s.U),
        diff_coeff=lambda s, x: d * (1.0 + ds * s.U ** 2),
        reaction_coeff=lambda s, x: react * s.U ** 2,
        has_reaction=react != 0,
        dependence=Dependence.AGGREGATED,
        # a0 >= 0 and a1 = 0 give type(-A(u)) <= 0
        flags=frozenset({"zzz_eligible"} if react >= 0 else ()),
    )


def symmetrize(model: ModelSpec) -> ModelSpec:
    """Evaluate every coefficient at the elementwise absolute value of the state.

    The aggregate seen by the callbacks is recomputed from ``|u|``.
    """

    def wrap(fn, with_age):
        if with_age:
            return lambda s, a, x: fn(_abs(s), a, x)
        return lambda s, x: fn(_abs(s), x)

    return dataclasses.replace(
        model,
        mu=wrap(model.mu, True),
        birth=wrap(model.birth, True),
        diff_coeff=wrap(model.diff_coeff, False),
        drift_coeff=wrap(model.drift_coeff, False),
        reaction_coeff=wrap(model.reaction_coeff, False),
        name=f"{model.name}+sym",
        flags=model.flags | {"symmetric"},
    )


def _abs(state: State) -> State:
    return State.of(np.abs(state.u), state.weights)
