"""Age grid, 1-D spatial mesh and finite-difference assembly of the elliptic part.

The spatial operator is

    A w = -(a w')' + a1 w' + a0 w

discretized in conservative (flux) form on a node-centred uniform mesh.
Neumann/Robin ends keep their boundary node as an unknown with a half
control volume; Dirichlet ends are eliminated.  With these conventions
``A = diag(mass)^-1 K`` for a matrix ``K`` that is symmetric whenever the
drift vanishes, so the mass functional annihilates the no-flux Laplacian
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ModelError

BoundaryKind = Literal["dirichlet", "robin", "neumann"]


@dataclass(frozen=True)
class Boundary:
    kind: BoundaryKind = "neumann"
    nu0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin", "neumann"):
            raise ModelError(f"unknown boundary kind {self.kind!r}")
        if self.nu0 < 0:
            raise ModelError(f"Robin coefficient nu0 must be >= 0, got {self.nu0}")
        if self.kind == "neumann" and self.nu0 != 0:
            raise ModelError("a Neumann boundary has nu0 = 0; use kind='robin'")

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"


@dataclass(frozen=True)
class BoundaryConditions:
    left: Boundary = field(default_factory=Boundary)
    right: Boundary = field(default_factory=Boundary)

    @classmethod
    def uniform(cls, kind: BoundaryKind, nu0: float = 0.0) -> "BoundaryConditions":
        return cls(Boundary(kind, nu0), Boundary(kind, nu0))

    @property
    def is_neumann(self) -> bool:
        return all(b.kind == "neumann" or (b.kind == "robin" and b.nu0 == 0)
                   for b in (self.left, self.right))


@dataclass(frozen=True)
class AgeGrid:
    """Uniform age nodes ``0 = a_0 < ... < a_N = a_max`` with trapezoid weights."""

    nodes: np.ndarray
    step: float
    quad_weights: np.ndarray

    @property
    def n_a(self) -> int:
        return len(self.nodes) - 1

    @property
    def a_max(self) -> float:
        return float(self.nodes[-1])

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid quadrature over the leading (age) axis."""
        return np.tensordot(self.quad_weights, values, axes=(0, 0))


def make_age_grid(a_max: float, n_a: int) -> AgeGrid:
    if not a_max > 0:
        raise ModelError(f"a_max must be positive, got {a_max}")
    if int(n_a) != n_a or n_a < 8:
        raise ModelError(f"n_a must be an integer >= 8, got {n_a}")
    n_a = int(n_a)
    nodes = np.linspace(0.0, a_max, n_a + 1)
    step = a_max / n_a
    weights = np.full(n_a + 1, step)
    weights[0] = weights[-1] = step / 2
    return AgeGrid(nodes=nodes, step=step, quad_weights=weights)


@dataclass(frozen=True)
class SpaceDiscretization:
    """Node-centred mesh on ``[0, domain_length]`` restricted to the unknowns."""

    n_x: int
    h: float
    domain_length: float
    bc: BoundaryConditions
    nodes: np.ndarray
    mass_weights: np.ndarray

    def assemble(self, diff, drift=None, reaction=None) -> np.ndarray:
        """Dense matrix of the operator for one coefficient field."""
        return assemble_operator(self, diff, drift, reaction)

    def mass(self, w: np.ndarray) -> np.ndarray:
        return w @ self.mass_weights


def make_space(domain_length: float, n_x: int, bc: BoundaryConditions) -> SpaceDiscretization:
    if not domain_length > 0:
        raise ModelError(f"domain length must be positive, got {domain_length}")
    if int(n_x) != n_x or n_x < 4:
        raise ModelError(f"n_x must be an integer >= 4, got {n_x}")
    n_x = int(n_x)
    n_dir = int(bc.left.is_dirichlet) + int(bc.right.is_dirichlet)
    intervals = n_x - 1 + n_dir
    h = domain_length / intervals
    full = np.linspace(0.0, domain_length, intervals + 1)
    lo = 1 if bc.left.is_dirichlet else 0
    nodes = full[lo:lo + n_x]
    mass = np.full(n_x, h)
    if not bc.left.is_dirichlet:
        mass[0] = h / 2
    if not bc.right.is_dirichlet:
        mass[-1] = h / 2
    return SpaceDiscretization(n_x=n_x, h=h, domain_length=float(domain_length), bc=bc,
                               nodes=nodes, mass_weights=mass)


def tridiagonal(space: SpaceDiscretization, diff, drift=None, reaction=None):
    """Return ``(lower, diag, upper)`` of the operator, vectorized over leading axes.

    Coefficient arrays have shape ``(..., n_x)``.  ``lower[..., i]`` couples row
    ``i`` to node ``i-1`` (``lower[..., 0]`` is unused, likewise ``upper[..., -1]``).
    """
    diff = np.asarray(diff, dtype=float)
    n = space.n_x
    diff = np.broadcast_to(diff, diff.shape[:-1] + (n,)) if diff.ndim else np.full(n, float(diff))
    if np.any(~np.isfinite(diff)) or np.any(diff <= 0):
        raise ModelError("diffusion coefficient must be finite and positive at every node")
    h2 = space.h ** 2
    half = 0.5 * (diff[..., 1:] + diff[..., :-1])  # a_{i+1/2}, i = 0..n-2

    lower = np.zeros(diff.shape)
    upper = np.zeros(diff.shape)
    diag = np.zeros(diff.shape)
    lower[..., 1:] = -half / h2
    upper[..., :-1] = -half / h2
    diag[..., 1:] += half / h2
    diag[..., :-1] += half / h2

    left, right = space.bc.left, space.bc.right
    if left.is_dirichlet:
        # eliminated boundary node; edge coefficient taken from the first unknown
        diag[..., 0] += diff[..., 0] / h2
    else:
        # half control volume doubles the flux row
        diag[..., 0] = 2 * diag[..., 0] + 2 * diff[..., 0] * left.nu0 / space.h
        upper[..., 0] *= 2
    if right.is_dirichlet:
        diag[..., -1] += diff[..., -1] / h2
    else:
        diag[..., -1] = 2 * diag[..., -1] + 2 * diff[..., -1] * right.nu0 / space.h
        lower[..., -1] *= 2

    if drift is not None:
        drift = np.broadcast_to(np.asarray(drift, dtype=float), diff.shape)
        c = drift / (2 * space.h)
        lower[..., 1:] -= c[..., 1:]
        upper[..., :-1] += c[..., :-1]
        # boundary derivative from the Robin relation w' = nu0 w (left), -nu0 w (right)
        if not left.is_dirichlet:
            upper[..., 0] -= c[..., 0]
            diag[..., 0] += drift[..., 0] * left.nu0
        if not right.is_dirichlet:
            lower[..., -1] += c[..., -1]
            diag[..., -1] -= drift[..., -1] * right.nu0
    if reaction is not None:
        diag = diag + np.broadcast_to(np.asarray(reaction, dtype=float), diff.shape)
    return lower, diag, upper


def assemble_operator(space: SpaceDiscretization, diff, drift=None, reaction=None) -> np.ndarray:
    """Dense ``n_x x n_x`` matrix of ``-(a w')' + a1 w' + a0 w`` with the mesh's BCs."""
    lower, diag, upper = tridiagonal(space, diff, drift, reaction)
    if diag.ndim != 1:
        raise ValueError("assemble_operator takes a single coefficient field; use tridiagonal()")
    return np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)


def tridiag_matvec(lower, diag, upper, w):
    out = diag * w
    out[..., 1:] += lower[..., 1:] * w[..., :-1]
    out[..., :-1] += upper[..., :-1] * w[..., 1:]
    return out


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm vectorized over leading axes (no pivoting).

    Intended for diagonally dominant M-matrices, where elimination without
    pivoting is stable.
    """
    n = diag.shape[-1]
    cp = np.empty(np.broadcast_shapes(diag.shape, rhs.shape))
    dp = np.empty_like(cp)
    denom = diag[..., 0]
    cp[..., 0] = upper[..., 0] / denom
    dp[..., 0] = rhs[..., 0] / denom
    for i in range(1, n):
        denom = diag[..., i] - lower[..., i] * cp[..., i - 1]
        cp[..., i] = upper[..., i] / denom
        dp[..., i] = (rhs[..., i] - lower[..., i] * dp[..., i - 1]) / denom
    x = np.empty_like(dp)
    x[..., -1] = dp[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x
