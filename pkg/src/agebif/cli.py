"""Command-line driver: config parsing, command dispatch and result files.

Exit status is 0 on success, 1 when a solver refuses (simplicity gate,
corrector failure, spectral breakdown) and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .bifurcation import continue_branch, local_expansion
from .errors import AgebifError, ConfigError, SolverError
from .evolution import (DensityField, birth_functional, duhamel, evaluate_coefficients, make_grid,
                        propagate)
from .grid import solve_tridiagonal, tridiagonal
from .model import DEFAULT_PARAMS, PRESET_KEYS, build_preset
from .spectral import assemble_q0, kernel_simplicity_check, normalize_birth, principal_pair
from .transient import run_to_steady

log = logging.getLogger(__name__)

COMMANDS = ("normalize", "expansion", "branch", "transient", "validate", "converge")
BRANCH_HEADER = ["eps", "n", "amplitude", "min_u0", "max_u0", "r_Qu", "residual",
                 "positive", "sign_flipped"]
N_A_BOUNDS = (8, 100_000)
N_X_BOUNDS = (4, 1024)
STEADY_TOL = 1e-6


@dataclass
class RunSpec:
    preset: str
    command: str
    params: dict = field(default_factory=dict)
    n_a: int = 200
    n_x: int = 32
    eps_max: float = 0.2
    steps: int = 20
    n: float | None = None
    t_max: float = 10.0
    tol_newton: float = 1e-9
    tol_eigen: float = 1e-12
    fd_step: float = 1e-4
    out_dir: str = "."

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


KEYS = {f.name for f in dataclasses.fields(RunSpec)}
REQUIRED = ("command", "preset")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def validate_mapping(data) -> RunSpec:
    """Check a decoded config object and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    for key, bounds in (("n_a", N_A_BOUNDS), ("n_x", N_X_BOUNDS)):
        if key in data:
            v = data[key]
            if not _is_int(v):
                raise ConfigError(f"{key} must be an integer, got {v!r}")
            if not bounds[0] <= v <= bounds[1]:
                raise ConfigError(f"{key}={v} outside bounds [{bounds[0]}, {bounds[1]}]")
    if "steps" in data and not (_is_int(data["steps"]) and data["steps"] >= 1):
        raise ConfigError(f"steps must be a positive integer, got {data['steps']!r}")
    for key in ("eps_max", "t_max", "tol_newton", "tol_eigen", "fd_step"):
        if key in data and not (_is_real(data[key]) and data[key] > 0):
            raise ConfigError(f"{key} must be a positive number, got {data[key]!r}")
    if data.get("n") is not None and not (_is_real(data["n"]) and data["n"] > 0):
        raise ConfigError(f"n must be a positive number, got {data['n']!r}")
    if "command" in data and data["command"] not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {data['command']!r}")
    if "preset" in data and data["preset"] not in PRESET_KEYS:
        raise ConfigError(f"preset must be one of {', '.join(sorted(PRESET_KEYS))}, "
                          f"got {data['preset']!r}")
    if "params" in data:
        params = data["params"]
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        for k, v in params.items():
            if not (_is_real(v) or isinstance(v, str)):
                raise ConfigError(f"params.{k} must be a number or string, got {v!r}")
    if "out_dir" in data and not isinstance(data["out_dir"], str):
        raise ConfigError("out_dir must be a string")

    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return RunSpec(**data)


def _decode(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config parse error at line {err.lineno}, column {err.colno}: "
                          f"{err.msg}") from None


def parse_config(text: str) -> RunSpec:
    return validate_mapping(_decode(text))


def load_config_file(path) -> dict:
    """Decode a config file without applying defaults (flags are merged later)."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    data = _decode(text)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


# ---------------------------------------------------------------- pipelines

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return "%.17g" % x


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _setup(spec: RunSpec, n_a=None, n_x=None):
    params = {**DEFAULT_PARAMS[spec.preset], **spec.params}
    model = build_preset(spec.preset, params)
    grid = make_grid(model, n_a or spec.n_a, n_x or spec.n_x)
    model, _ = normalize_birth(model, grid, spec.tol_eigen)
    sd = principal_pair(assemble_q0(model, grid), tol=spec.tol_eigen)
    return model, grid, sd


def observed_order(steps, values) -> float:
    """Convergence order ``p`` from three resolutions.

    Solves ``(q1 - q2) / (q2 - q3) = (h1^p - h2^p) / (h2^p - h3^p)``; NaN when
    the differences sit at rounding level or the ratio has no solution.
    """
    h1, h2, h3 = steps
    q1, q2, q3 = values
    d12, d23 = q1 - q2, q2 - q3
    scale = max(abs(q1), abs(q2), abs(q3), 1e-300)
    if abs(d23) <= 1e-13 * scale or abs(d12) <= 1e-13 * scale:
        return float("nan")
    ratio = d12 / d23

    def f(p):
        return (h1 ** p - h2 ** p) / (h2 ** p - h3 ** p) - ratio

    try:
        return float(brentq(f, 0.05, 8.0))
    except ValueError:
        return float("nan")


def mass_defect(model, grid) -> float | None:
    """Worst relative mass change of one diffusion-only step at the zero state.

    Only defined for no-flux boundaries without drift or reaction.
    """
    if not grid.space.bc.is_neumann or model.has_drift or model.has_reaction:
        return None
    c = evaluate_coefficients(model, DensityField.zeros(grid))
    lower, diag, upper = tridiagonal(grid.space, c.diff[:-1])
    da = grid.ages.step
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 1.5, size=diag.shape)
    out = solve_tridiagonal(da * lower, 1 + da * diag, da * upper, w)
    mw = grid.space.mass_weights
    return float(np.max(np.abs(out @ mw - w @ mw) / (w @ mw)))


def emit_convergence_study(spec: RunSpec) -> dict:
    """Rerun normalize and expansion on refined age and space grids.

    Age ladder ``n_a, 2 n_a, 4 n_a`` and space ladder ``n_x, 2 n_x, 4 n_x``.
    """
    runs = []
    ladders = {"age": [(spec.n_a * 2 ** i, spec.n_x) for i in range(3)],
               "space": [(spec.n_a, spec.n_x * 2 ** i) for i in range(3)]}
    cache = {}
    for sizes in ladders.values():
        for n_a, n_x in sizes:
            if (n_a, n_x) in cache:
                continue
            model, grid, sd = _setup(spec, n_a, n_x)
            entry = {"n_a": n_a, "n_x": n_x, "age_step": grid.ages.step, "h": grid.space.h,
                     "birth_scale": model.birth_scale, "r_Q0": sd.r,
                     "mass_defect": mass_defect(model, grid)}
            try:
                entry["zeta"] = local_expansion(model, grid, spec.fd_step, spec.tol_eigen).zeta
            except SolverError as err:
                entry["zeta"] = None
                entry["zeta_error"] = str(err)
            cache[(n_a, n_x)] = entry
            runs.append(entry)
    orders = {}
    for axis, sizes in ladders.items():
        entries = [cache[s] for s in sizes]
        step_key = "age_step" if axis == "age" else "h"
        for q in ("birth_scale", "zeta"):
            vals = [e[q] for e in entries]
            if any(v is None for v in vals):
                orders[f"{axis}_{q}"] = None
                continue
            p = observed_order([e[step_key] for e in entries], vals)
            orders[f"{axis}_{q}"] = None if math.isnan(p) else p
    defects = [e["mass_defect"] for e in runs if e["mass_defect"] is not None]
    return {"preset": spec.preset, "runs": runs, "orders": orders,
            "max_mass_defect": max(defects) if defects else None}


def _validate(spec, model, grid, sd) -> dict:
    Q0 = assemble_q0(model, grid)
    report = kernel_simplicity_check(Q0)
    left = principal_pair(Q0.T, tol=spec.tol_eigen)
    annihilation = float(np.max(np.abs(sd.psi @ (np.eye(len(sd.B)) - Q0))))
    checks = {
        "normalization": (abs(sd.r - 1.0), 1e-10),
        "transpose_radius": (abs(left.r - sd.r), 1e-10),
        "psi_annihilates_range": (annihilation, 1e-8),
        "dim_kernel": (report.dim_kernel, 1),
        "B_min": (float(sd.B.min()), 0.0),
    }
    defect = mass_defect(model, grid)
    if defect is not None:
        checks["mass_defect"] = (defect, 1e-13)
    out = {}
    for name, (value, tol) in checks.items():
        if name == "dim_kernel":
            ok = value == tol
        elif name == "B_min":
            ok = value > tol
        else:
            ok = value <= tol
        out[name] = {"value": value, "tolerance": tol, "pass": bool(ok)}
    if report.simple:
        exp = local_expansion(model, grid, spec.fd_step, spec.tol_eigen)
        Q0 = assemble_q0(model, grid)
        l0Kh = birth_functional(model, duhamel(model, exp.h), "linear")
        bordered = float(np.max(np.abs((np.eye(len(exp.xi)) - Q0) @ exp.xi
                                       - (exp.zeta * sd.B + exp.g - l0Kh))))
        for name, value, tol in (("xi_equation", bordered, 1e-8),
                                 ("xi_orthogonal", abs(float(sd.psi @ exp.xi)), 1e-10)):
            out[name] = {"value": value, "tolerance": tol, "pass": value <= tol}
    return out


def write_branch_csv(branch, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BRANCH_HEADER)
        for p in branch.points:
            trace = p.u.trace
            writer.writerow([_fmt(v) for v in (p.eps, p.n, p.amplitude, trace.min(), trace.max(),
                                               p.r_Qu, p.residual, bool(p.positive),
                                               bool(p.sign_flipped))])
    return path


@dataclass
class CommandResult:
    status: int
    files: list = field(default_factory=list)


def run_command(spec: RunSpec, stdout=None, stderr=None) -> CommandResult:
    """Run ``spec.command``; diagnostics go to ``stderr``."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        return _dispatch(spec, stdout, stderr)
    except SolverError as err:
        print(f"error: solver refused: {err}", file=stderr)
        return CommandResult(1)
    except (AgebifError, ValueError) as err:
        print(f"error: invalid input: {err}", file=stderr)
        return CommandResult(2)


def _dispatch(spec: RunSpec, stdout, stderr) -> CommandResult:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.command == "transient" and spec.n is None:
        raise ConfigError("command 'transient' requires n")
    if spec.command == "converge":
        report = emit_convergence_study(spec)
        return CommandResult(0, [_write_json(out / "converge.json", report)])

    model, grid, sd = _setup(spec)
    print(f"birth_scale={model.birth_scale!r} r_Q0={sd.r:.12f}", file=stdout)
    files = [_write_json(out / "normalize.json", {"birth_scale": model.birth_scale,
                                                  "r_Q0": sd.r, "iterations": sd.iterations})]
    status = 0
    if spec.command == "expansion":
        exp = local_expansion(model, grid, spec.fd_step, spec.tol_eigen)
        files.append(_write_json(out / "expansion.json", {
            "zeta": exp.zeta, "tau_residual": abs(exp.tau),
            "xi_norm": float(np.max(np.abs(exp.xi))),
            "B": exp.spectral.B.tolist(), "psi": exp.spectral.psi.tolist(),
            "notes": list(exp.notes)}))
    elif spec.command == "branch":
        branch = continue_branch(model, grid, spec.eps_max, spec.steps,
                                 fd_step=spec.fd_step, tol=spec.tol_newton)
        files.append(write_branch_csv(branch, out / "branch.csv"))
        print(f"direction={branch.direction.value} n_window=[{branch.n_window[0]:.10g}, "
              f"{branch.n_window[1]:.10g}]", file=stdout)
        for note in branch.notes:
            print(f"note: {note}", file=stderr)
        if branch.truncated:
            where = ", ".join(f"eps={e:.6g}" for e in branch.truncated.values())
            print(f"error: corrector failed; branch truncated at {where}", file=stderr)
            status = 1
    elif spec.command == "transient":
        u0 = DensityField(spec.eps_max * propagate(model, DensityField.zeros(grid), sd.B).values,
                          grid)
        state = run_to_steady(model, u0, spec.t_max, STEADY_TOL, n=spec.n)
        path = out / "transient.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "residual", "mass", "min_u"])
            for row in state.residual_history:
                writer.writerow([_fmt(v) for v in row])
        files.append(path)
        print(f"t={state.t:.6g} residual={state.residual:.3e}", file=stdout)
    elif spec.command == "validate":
        checks = _validate(spec, model, grid, sd)
        ok = all(c["pass"] for c in checks.values())
        files.append(_write_json(out / "validate.json", {"checks": checks, "all_pass": ok}))
        for name, c in checks.items():
            print(f"{'PASS' if c['pass'] else 'FAIL'} {name} {c['value']!r}", file=stdout)
        status = 0 if ok else 1
    return CommandResult(status, files)


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agebif", description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?", help="JSON config file; flags override its values")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--preset")
    p.add_argument("--params", type=json.loads, help="JSON object of preset parameters")
    p.add_argument("--n-a", "--n_a", dest="n_a", type=int)
    p.add_argument("--n-x", "--n_x", dest="n_x", type=int)
    p.add_argument("--eps-max", "--eps_max", dest="eps_max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--n", type=float)
    p.add_argument("--t-max", "--t_max", dest="t_max", type=float)
    p.add_argument("--tol-newton", "--tol_newton", dest="tol_newton", type=float)
    p.add_argument("--tol-eigen", "--tol_eigen", dest="tol_eigen", type=float)
    p.add_argument("--fd-step", "--fd_step", dest="fd_step", type=float)
    p.add_argument("--out-dir", "--out_dir", dest="out_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        data = load_config_file(args.config) if args.config else {}
        overrides = {k: v for k, v in vars(args).items()
                     if k not in ("config", "verbose") and v is not None}
        spec = validate_mapping({**data, **overrides})
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return run_command(spec).status


if __name__ == "__main__":
    sys.exit(main())
