"""Net reproduction operator and its principal (Krein-Rutman) eigenpair."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SimplicityError, SpectralError
from .evolution import DensityField, Grid, Propagator, birth_modulus
from .model import ModelSpec


def assemble_q(model: ModelSpec, frozen: DensityField) -> np.ndarray:
    """Matrix of ``w -> sum_k q_k b(frozen, a_k) Pi_frozen(a_k, 0) w``.

    At the zero state this is ``Q0``; the birth modulus includes ``birth_scale``.
    """
    grid = frozen.grid
    prop = Propagator.frozen_at(model, frozen)
    b = birth_modulus(model, frozen)
    q = grid.ages.quad_weights
    P = np.eye(grid.space.n_x)
    Q = q[0] * b[0][:, None] * P
    for k in range(grid.ages.n_a):
        P = prop.step(k, P)
        Q += q[k + 1] * b[k + 1][:, None] * P
    return Q


def assemble_q0(model: ModelSpec, grid: Grid) -> np.ndarray:
    return assemble_q(model, DensityField.zeros(grid))


@dataclass(frozen=True)
class SpectralData:
    r: float
    B: np.ndarray      # right eigenvector, sup-normalized
    psi: np.ndarray    # left eigenvector with <psi, B> = 1
    iterations: int
    residual: float
    bounds: np.ndarray  # Collatz-Wielandt (lower, upper) per right iteration


def _power(Q: np.ndarray, tol: float, max_iter: int):
    n = Q.shape[0]
    x = np.ones(n)
    bounds = []
    residual = np.inf
    for it in range(1, max_iter + 1):
        y = Q @ x
        norm = np.max(np.abs(y))
        if norm < 1e-14:
            raise SpectralError("spectral radius below 1e-14; no reliable principal pair")
        r = float(x @ y / (x @ x))
        residual = float(np.max(np.abs(y - r * x)) / abs(r)) if r != 0 else np.inf
        if np.all(x > 0):
            ratio = y / x
            bounds.append((ratio.min(), ratio.max()))
        if residual <= tol:
            return r, x, it, residual, np.array(bounds).reshape(-1, 2)
        x = y / norm
    raise SpectralError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(residual {residual:.3e}); dominant eigenvalues may be nearly degenerate",
        residual=residual,
    )


def principal_pair(Q: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> SpectralData:
    """Spectral radius with right and left principal eigenvectors by power iteration.

    Both iterations start from the constant vector.  ``B`` is sup-normalized and
    ``psi`` is scaled so that ``psi @ B == 1``.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.min() < 0:
        if Q.min() < -1e-12:
            warnings.warn(f"Q has negative entries (min {Q.min():.3e}); "
                          "Krein-Rutman structure not guaranteed", RuntimeWarning)
    r, B, iters, res_right, bounds = _power(Q, tol, max_iter)
    _, psi, iters_left, res_left, _ = _power(Q.T, tol, max_iter)
    B = B / np.max(np.abs(B))
    psi = psi / np.max(np.abs(psi))
    pairing = float(psi @ B)
    if abs(pairing) <= 1e-6:
        raise SpectralError(f"left/right pairing {pairing:.3e} too small; "
                            "principal eigenvalue is not algebraically simple")
    return SpectralData(r=r, B=B, psi=psi / pairing, iterations=max(iters, iters_left),
                        residual=max(res_right, res_left), bounds=bounds)


def normalize_birth(model: ModelSpec, grid: Grid, tol: float = 1e-12) -> tuple[ModelSpec, float]:
    """Rescale the birth modulus so that ``r(Q0) = 1``.

    Returns the rescaled model and the factor applied to its ``birth_scale``.
    """
    sd = principal_pair(assemble_q0(model, grid), tol=tol)
    if sd.r <= 1e-14:
        raise SpectralError("r(Q0) vanishes; the population cannot reproduce")
    scale = 1.0 / sd.r
    return model.with_birth_scale(model.birth_scale * scale), scale


@dataclass(frozen=True)
class SimplicityReport:
    dim_kernel: int
    gap: float
    singular_values: np.ndarray
    r: float

    @property
    def simple(self) -> bool:
        return self.dim_kernel == 1


def kernel_simplicity_check(Q: np.ndarray, rel_tol: float = 1e-8) -> SimplicityReport:
    """Count singular values of ``I - Q`` below ``rel_tol`` times the largest one."""
    Q = np.asarray(Q, dtype=float)
    s = np.linalg.svd(np.eye(Q.shape[0]) - Q, compute_uv=False)
    r = float(np.max(np.abs(np.linalg.eigvals(Q))))
    if s[0] == 0:
        return SimplicityReport(len(s), 0.0, s, r)
    small = s < rel_tol * s[0]
    dim = int(small.sum())
    kept, dropped = s[~small], s[small]
    if dropped.size == 0:
        gap = np.inf
    elif dropped.max() == 0:
        gap = np.inf
    else:
        gap = float(kept.min() / dropped.max())
    return SimplicityReport(dim, gap, s, r)


def require_simple(Q: np.ndarray) -> SimplicityReport:
    report = kernel_simplicity_check(Q)
    if not report.simple:
        raise SimplicityError(report.dim_kernel, report.gap)
    return report
