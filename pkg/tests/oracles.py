"""Independent reference values used by the test-suite.

Nothing here calls into the package's solvers; every quantity is derived by
hand for spatially flat (no-flux) or pure-Dirichlet situations where the
problem reduces to a scalar renewal equation.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from agebif import build_preset, make_grid, normalize_birth

ZETA_CONTINUUM = 1.0 - 2.0 * math.exp(-1.0)
SCALE_NO_DIFFUSION = 1.0 / (1.0 - math.exp(-1.0))


def trapezoid_weights(n_a: int, a_max: float = 1.0) -> np.ndarray:
    q = np.full(n_a + 1, a_max / n_a)
    q[0] = q[-1] = a_max / (2 * n_a)
    return q


def survival_sum(m: float, n_a: int, a_max: float = 1.0) -> float:
    """Trapezoid sum of the implicit-Euler survival ``(1 + da m)^-k``."""
    da = a_max / n_a
    k = np.arange(n_a + 1)
    return float(trapezoid_weights(n_a, a_max) @ (1.0 + da * m) ** (-k))


def survival_continuum(m: float, a_max: float = 1.0) -> float:
    return (1.0 - math.exp(-m * a_max)) / m


def discrete_zeta(n_a: int) -> float:
    """Branch slope for the flat model ``mu = 1 + U``: ``-d/dm`` of the survival sum at 1."""
    da = 1.0 / n_a
    k = np.arange(n_a + 1)
    return float(trapezoid_weights(n_a) @ (k * da * (1.0 + da) ** (-k - 1.0)))


def flat_branch_n(eps: float, survival) -> float:
    """``n`` on the flat branch with trace ``eps`` and ``mu = 1 + U``.

    ``U`` solves ``U = eps * s(1 + U)`` (bisection); normalization gives
    ``n = s(1) / s(1 + U)``.
    """
    if eps == 0:
        return 1.0
    f = lambda U: U - eps * survival(1.0 + U)
    lo, hi = sorted((0.0, 2.0 * eps * survival(1.0)))
    lo, hi = lo - abs(eps), hi + abs(eps)
    U = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    return survival(1.0) / survival(1.0 + U)


def dirichlet_eigenvalue(d: float, n_x: int, length: float = 1.0) -> float:
    """Smallest eigenvalue of ``-d w''`` with the 3-point stencil and Dirichlet ends."""
    h = length / (n_x + 1)
    return 4.0 * d / h ** 2 * math.sin(math.pi * h / (2 * length)) ** 2


def dirichlet_scale_discrete(d: float, n_a: int, n_x: int) -> float:
    return 1.0 / survival_sum(1.0 + dirichlet_eigenvalue(d, n_x), n_a)


def dirichlet_scale_continuum(d: float) -> float:
    m = 1.0 + d * math.pi ** 2
    return m / (1.0 - math.exp(-m))


@lru_cache(maxsize=None)
def normalized(name: str, n_a: int, n_x: int, **params):
    """Normalized preset and its grid (cached; models are immutable)."""
    base = {"a_max": 1.0, "mu0": 1.0, "d": 0.1}
    model = build_preset(name, {**base, **params})
    grid = make_grid(model, n_a, n_x)
    model, _ = normalize_birth(model, grid)
    return model, grid
