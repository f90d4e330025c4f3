"""Exception hierarchy.

Input problems (bad parameters, malformed configs) derive from ``ValueError``
so callers can treat them uniformly; solver refusals derive from
:class:`SolverError` and carry enough context to explain the refusal.
"""

from __future__ import annotations


class AgebifError(Exception):
    """Base class for all toolkit errors."""


class ModelError(AgebifError, ValueError):
    """Invalid model data or preset parameters."""


class ConfigError(AgebifError, ValueError):
    """Malformed or out-of-bounds run configuration."""


class SolverError(AgebifError):
    """A numerical procedure refused to produce a result."""


class SingularStepError(SolverError):
    def __init__(self, age_index: int, age: float):
        self.age_index = age_index
        self.age = age
        super().__init__(f"singular step matrix at age node {age_index} (a={age:.6g})")


class ModelBallError(SolverError):
    """Coefficients evaluated outside their admissible range."""


class SpectralError(SolverError):
    """Principal eigenpair unavailable (non-convergence or vanishing radius)."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class SimplicityError(SolverError):
    """The eigenvalue 1 of Q0 is not geometrically simple."""

    def __init__(self, dim_kernel: int, gap: float):
        self.dim_kernel = dim_kernel
        self.gap = gap
        super().__init__(
            f"kernel of I - Q0 has dimension dim_kernel={dim_kernel} (expected 1); "
            f"singular value gap {gap:.3g}"
        )


class SelfConsistencyError(SolverError):
    """Coefficient-freezing iteration failed to settle."""


class CorrectorError(SolverError):
    """Newton corrector did not reach the requested tolerance."""
