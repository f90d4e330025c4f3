"""Local bifurcation from the trivial equilibrium at the critical value ``n = 1``.

Equilibria solve ``u = Pi_u(., 0) w`` with trace ``w = n l(u)``.  The branch
is parametrized by the amplitude ``eps = <psi, w>``, where ``psi`` is the
left principal eigenvector of ``Q0`` normalized against the right one ``B``.
Near ``eps = 0``

    n(eps) = 1 + zeta eps + o(eps^2)
    u(eps) = eps v + eps^2 w2 + o(eps^3)

with ``v = Pi_0(., 0) B`` and ``w2 = Pi_0(., 0) xi - K0 h``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ModelBallError, ModelError, SelfConsistencyError,
                     SimplicityError, SingularStepError, SolverError)
from .evolution import (DensityField, Grid, birth_functional, duhamel, evaluate_coefficients,
                        propagate, self_consistent_field, spatial_operators)
from .grid import tridiag_matvec
from .model import ModelSpec
from .spectral import (SpectralData, assemble_q, assemble_q0, kernel_simplicity_check,
                       principal_pair)

log = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class Expansion:
    v: DensityField
    h: DensityField
    g: np.ndarray
    zeta: float
    xi: np.ndarray
    w2: DensityField
    tau: float
    spectral: SpectralData
    notes: tuple[str, ...] = ()

    def predict(self, eps: float) -> tuple[float, DensityField]:
        """Second-order predictor ``(1 + zeta eps, eps v + eps^2 w2)``."""
        u = eps * self.v.values + eps ** 2 * self.w2.values
        return 1.0 + self.zeta * eps, DensityField(u, self.v.grid)


def coefficient_derivative_action(model: ModelSpec, v: DensityField, step: float) -> DensityField:
    """Directional derivative of ``A + mu`` at the zero state applied to ``v``.

    Central difference in the state.  Row ``k + 1`` pairs the derivative of the
    coefficients frozen at ``a_k`` with ``v(a_{k+1})``, matching the left-node
    freezing of the age march; row 0 is never read by the Duhamel recurrence.
    """
    grid = v.grid
    plus = spatial_operators(model, DensityField(step * v.values, grid))
    minus = spatial_operators(model, DensityField(-step * v.values, grid))
    lower, diag, upper = ((p - m) / (2 * step) for p, m in zip(plus, minus))
    h = np.zeros(grid.shape)
    h[1:] = tridiag_matvec(lower[:-1], diag[:-1], upper[:-1], v.values[1:])
    return DensityField(h, grid)


def birth_second_variation(model: ModelSpec, v: DensityField, step: float) -> np.ndarray:
    """``(l_*(s v) + l_*(-s v)) / (2 s^2)``, i.e. half the second derivative of ``l_*``."""
    grid = v.grid
    plus = birth_functional(model, DensityField(step * v.values, grid), "remainder")
    minus = birth_functional(model, DensityField(-step * v.values, grid), "remainder")
    return (plus + minus) / (2 * step ** 2)


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    return 0.0 if scale == 0 else float(np.max(np.abs(a - b)) / scale)


def local_expansion(model: ModelSpec, grid: Grid, fd_step: float = 1e-4,
                    tol_eigen: float = 1e-12) -> Expansion:
    """Second-order data of the bifurcating branch for a normalized model.

    Raises :class:`SimplicityError` unless ``ker(I - Q0)`` is one-dimensional.
    """
    zero = DensityField.zeros(grid)
    Q0 = assemble_q(model, zero)
    report = kernel_simplicity_check(Q0)
    if abs(report.r - 1.0) > 1e-8:
        raise ModelError(f"model is not normalized: r(Q0) = {report.r:.12g}")
    if report.dim_kernel != 1:
        raise SimplicityError(report.dim_kernel, report.gap)
    sd = principal_pair(Q0, tol=tol_eigen)
    B, psi = sd.B, sd.psi
    notes = []

    v = propagate(model, zero, B)
    h = coefficient_derivative_action(model, v, fd_step)
    g = birth_second_variation(model, v, fd_step)

    # built-in step-halving sanity check of both difference quotients
    h2 = coefficient_derivative_action(model, v, 2 * fd_step)
    g2 = birth_second_variation(model, v, 2 * fd_step)
    for label, a, b in (("h", h.values, h2.values), ("g", g, g2)):
        gap = _relative_gap(a, b)
        if gap > 1e-3:
            msg = f"finite-difference {label} changes by {gap:.2e} under step doubling"
            warnings.warn(msg, RuntimeWarning)
            notes.append(msg)

    first = (birth_functional(model, DensityField(fd_step * v.values, grid), "remainder")
             - birth_functional(model, DensityField(-fd_step * v.values, grid), "remainder"))
    first = first / (2 * fd_step)
    if np.max(np.abs(first)) > 1e-6 * max(1.0, np.max(np.abs(B))):
        msg = f"D_u l_*(0) does not vanish numerically (max {np.max(np.abs(first)):.2e})"
        warnings.warn(msg, RuntimeWarning)
        notes.append(msg)

    Kh = duhamel(model, h)
    l0Kh = birth_functional(model, Kh, "linear")
    zeta = float(psi @ (l0Kh - g))

    n = grid.space.n_x
    rhs = zeta * B + g - l0Kh
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = np.eye(n) - Q0
    bordered[:n, n] = B
    bordered[n, :n] = psi
    try:
        sol = np.linalg.solve(bordered, np.append(rhs, 0.0))
    except np.linalg.LinAlgError:
        raise SolverError("bordered system for xi is singular") from None
    xi, tau = sol[:n], float(sol[n])
    if abs(tau) > 1e-8:
        raise SolverError(f"bordering multiplier tau = {tau:.3e} exceeds 1e-8; "
                          "zeta projection is inconsistent")
    w2 = DensityField(propagate(model, zero, xi).values - Kh.values, grid)
    return Expansion(v=v, h=h, g=g, zeta=zeta, xi=xi, w2=w2, tau=tau, spectral=sd,
                     notes=tuple(notes))


@dataclass(frozen=True)
class BranchPoint:
    eps: float
    n: float
    u: DensityField
    r_Qu: float = float("nan")
    residual: float = float("nan")
    converged: bool = False
    positive: bool | None = None
    sign_flipped: bool = False
    zzz: float = float("nan")
    flipped: DensityField | None = None
    iterations: int = 0

    @property
    def trace(self) -> np.ndarray:
        return self.u.trace

    @property
    def amplitude(self) -> float:
        return self.u.sup


class EquilibriumSolver:
    """Newton corrector with a finite-difference Jacobian.

    Unknowns are the trace ``w`` (and ``n`` when the amplitude is prescribed).
    The Jacobian is kept between iterations and between calls while Newton
    contracts well, and rebuilt as soon as the contraction degrades.
    """

    def __init__(self, model: ModelSpec, grid: Grid, spectral: SpectralData | None = None,
                 tol: float = 1e-9, jac_step: float = 1e-7, inner_tol: float = 1e-11,
                 max_sweeps: int = 100, max_iter: int = 40):
        self.model = model
        self.grid = grid
        if spectral is None:
            spectral = principal_pair(assemble_q0(model, grid))
        self.spectral = spectral
        self.psi = spectral.psi
        self.tol = tol
        self.jac_step = jac_step
        self.inner_tol = inner_tol
        self.max_sweeps = max_sweeps
        self.max_iter = max_iter
        self._jac = None
        self.jacobian_builds = 0

    def reset(self):
        self._jac = None

    def field(self, w: np.ndarray, start: DensityField) -> DensityField:
        return self_consistent_field(self.model, w, start, self.inner_tol, self.max_sweeps)

    def _residual(self, x, eps, n_fixed, start):
        nx = self.grid.space.n_x
        w = x[:nx]
        n = x[nx] if eps is not None else n_fixed
        u = self.field(w, start)
        ell = birth_functional(self.model, u, "full")
        F = w - n * ell
        if eps is not None:
            F = np.append(F, self.psi @ w - eps)
        return F, u, ell

    def _jacobian(self, x, F, u, ell, eps, n_fixed):
        nx = self.grid.space.n_x
        J = np.zeros((len(x), len(x)))
        for j in range(nx):
            xp = x.copy()
            xp[j] += self.jac_step
            Fp, _, _ = self._residual(xp, eps, n_fixed, u)
            J[:, j] = (Fp - F) / self.jac_step
        if eps is not None:
            J[:nx, nx] = -ell
            J[nx, :nx] = self.psi
        self.jacobian_builds += 1
        return J

    def solve(self, eps: float | None = None, n: float | None = None,
              guess: BranchPoint | None = None) -> BranchPoint:
        """Correct ``guess`` onto an equilibrium with prescribed ``eps`` or ``n``.

        Returns the best point found; ``converged`` is false on stagnation.
        """
        if (eps is None) == (n is None):
            raise ValueError("prescribe exactly one of eps and n")
        grid = self.grid
        if eps is not None and eps == 0:
            n0 = guess.n if guess is not None else 1.0
            return BranchPoint(eps=0.0, n=n0, u=DensityField.zeros(grid), residual=0.0,
                               converged=True,
                               r_Qu=principal_pair(assemble_q0(self.model, grid)).r)
        if guess is None:
            raise ValueError("a guess is required for a nontrivial equilibrium")
        if not (np.all(np.isfinite(guess.u.values)) and np.isfinite(guess.n)):
            raise ValueError("guess must be finite")

        w0 = guess.u.trace.copy()
        x = np.append(w0, guess.n) if eps is not None else w0
        F, u, ell = self._residual(x, eps, n, guess.u)
        norm = float(np.max(np.abs(F)))
        J = self._jac if self._jac is not None and self._jac.shape == (len(x),) * 2 else None
        fresh = False
        iterations = 0
        while norm > self.tol and iterations < self.max_iter:
            iterations += 1
            if J is None:
                J = self._jacobian(x, F, u, ell, eps, n)
                fresh = True
            try:
                dx = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                if fresh:
                    break
                J = None
                continue
            lam, accepted = 1.0, None
            while lam >= 1 / 32:
                try:
                    trial = self._residual(x + lam * dx, eps, n, u)
                except (SelfConsistencyError, ModelBallError, SingularStepError):
                    lam /= 2
                    continue
                if np.max(np.abs(trial[0])) < norm:
                    accepted = trial
                    break
                lam /= 2
            if accepted is None:
                if fresh:
                    log.debug("Newton stagnated at residual %.3e", norm)
                    break
                J = None
                continue
            x = x + lam * dx
            F, u, ell = accepted
            new_norm = float(np.max(np.abs(F)))
            if new_norm > 0.1 * norm:
                J = None
            norm = new_norm
            fresh = False
        self._jac = J if J is not None else self._jac

        nx = grid.space.n_x
        n_val = float(x[nx]) if eps is not None else float(n)
        eps_val = float(eps) if eps is not None else float(self.psi @ x[:nx])
        converged = norm <= self.tol
        r = float("nan")
        if converged:
            r = principal_pair(assemble_q(self.model, u)).r
        return BranchPoint(eps=eps_val, n=n_val, u=u, r_Qu=r, residual=norm,
                           converged=converged, iterations=iterations)


def solve_equilibrium(model: ModelSpec, grid: Grid, *, eps: float | None = None,
                      n: float | None = None, guess: BranchPoint | None = None,
                      tol: float = 1e-9) -> BranchPoint:
    return EquilibriumSolver(model, grid, tol=tol).solve(eps=eps, n=n, guess=guess)


def symmetry_defect(model: ModelSpec, u: DensityField) -> float:
    """Largest difference between coefficients evaluated at ``u`` and ``-u``."""
    a = evaluate_coefficients(model, u)
    b = evaluate_coefficients(model, -u)
    worst = 0.0
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if x is None and y is None:
            continue
        scale = max(1.0, float(np.max(np.abs(x))))
        worst = max(worst, float(np.max(np.abs(x - y))) / scale)
    return worst


def zzz_value(model: ModelSpec, u: DensityField) -> float:
    """Discrete ``int b exp(-int mu) exp(a lambda0(u)) da``.

    ``lambda0`` enters through the principal (smallest) eigenvalue of
    ``A(u, a) + mu(u, a)``, which reduces to ``mu - lambda0`` when ``mu`` does
    not vary in space; ``b`` is taken at its spatial maximum.
    """
    grid = u.grid
    lower, diag, upper = spatial_operators(model, u)
    b = evaluate_coefficients(model, u).birth.max(axis=1)
    n_a = grid.ages.n_a
    bands = np.stack([lower, diag, upper])
    age_independent = np.all(bands == bands[:, :1])
    lam = np.empty(n_a)
    for k in range(1 if age_independent else n_a):
        M = np.diag(diag[k]) + np.diag(lower[k, 1:], -1) + np.diag(upper[k, :-1], 1)
        lam[k] = np.min(np.linalg.eigvals(M).real)
    if age_independent:
        lam[:] = lam[0]
    survival = np.concatenate([[1.0], np.cumprod(1.0 / (1.0 + grid.ages.step * lam))])
    return float(grid.ages.quad_weights @ (b * survival))


def classify_point(model: ModelSpec, point: BranchPoint,
                   solver: EquilibriumSolver | None = None) -> BranchPoint:
    """Fill positivity, sign-flip and supercriticality-test fields of a point."""
    u = point.u
    positive = bool(np.min(u.values) >= -POSITIVITY_TOL)
    zzz = zzz_value(model, u)
    sign_flipped, flipped = False, None
    if not positive and point.converged and symmetry_defect(model, u) <= 1e-12:
        solver = solver or EquilibriumSolver(model, u.grid)
        mirror = BranchPoint(eps=-point.eps, n=point.n, u=-u)
        other = solver.solve(eps=-point.eps, guess=mirror)
        if other.converged and np.min(other.u.values) >= -POSITIVITY_TOL:
            sign_flipped, flipped = True, other.u
    return dataclasses.replace(point, positive=positive, zzz=zzz,
                               sign_flipped=sign_flipped, flipped=flipped)


class Direction(enum.Enum):
    SUPERCRITICAL = "Supercritical"
    SUBCRITICAL = "Subcritical"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Branch:
    points: list[BranchPoint]
    n_window: tuple[float, float]
    direction: Direction
    expansion: Expansion
    truncated: dict = field(default_factory=dict)  # side -> first failing eps
    notes: tuple[str, ...] = ()


def branch_direction(points: list[BranchPoint], tol: float = 1e-8) -> Direction:
    ns = [p.n for p in points if p.eps > 0 and p.converged]
    if not ns:
        return Direction.UNDETERMINED
    sup = min(ns) >= 1 - tol
    sub = max(ns) <= 1 + tol
    if sup and not sub:
        return Direction.SUPERCRITICAL
    if sub and not sup:
        return Direction.SUBCRITICAL
    return Direction.UNDETERMINED


def continue_branch(model: ModelSpec, grid: Grid, eps_max: float, steps: int,
                    expansion: Expansion | None = None, fd_step: float = 1e-4,
                    tol: float = 1e-9) -> Branch:
    """March the amplitude over ``+-eps_max * [1/steps, ..., 1]``.

    Every corrector is seeded from the second-order predictor.  A side of the
    branch stops at the first amplitude where the corrector fails.
    """
    if steps < 1 or not eps_max > 0:
        raise ValueError("need steps >= 1 and eps_max > 0")
    exp = expansion or local_expansion(model, grid, fd_step)
    solver = EquilibriumSolver(model, grid, exp.spectral, tol=tol)
    amplitudes = eps_max * np.arange(1, steps + 1) / steps
    points, truncated, notes = [], {}, list(exp.notes)
    for side in (1, -1):
        solver.reset()
        previous = []
        for eps in side * amplitudes:
            n_pred, u_pred = exp.predict(float(eps))
            try:
                pt = solver.solve(eps=float(eps), guess=BranchPoint(float(eps), n_pred, u_pred))
            except SolverError as err:
                log.info("corrector failed at eps=%g: %s", eps, err)
                truncated[side] = float(eps)
                break
            if not pt.converged:
                truncated[side] = float(eps)
                break
            if len(previous) >= 2 and (previous[-1] - previous[-2]) * (pt.n - previous[-1]) < 0:
                notes.append(f"n reverses direction near eps={eps:.6g}")
            previous.append(pt.n)
            points.append(classify_point(model, pt, solver))
    points.sort(key=lambda p: p.eps)
    ns = [1.0] + [p.n for p in points if p.eps > 0]
    return Branch(points=points, n_window=(min(ns), max(ns)),
                  direction=branch_direction(points), expansion=exp,
                  truncated=truncated, notes=tuple(notes))
