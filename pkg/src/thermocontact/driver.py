"""Command line entry point: config parsing, runs, checks, cascades.

Config files are flat ``key = value`` text with ``#`` comments. Sections
are spelled in the key: ``mesh.*`` selects the domain, ``model.*``
overrides material constants, ``solver.*`` fills the stepping
parameters, ``output.*`` controls persistence. Every CSV written starts
with a header row followed by a comment line carrying the sha256 of the
config file, and identical configs reproduce byte-identical files.

Exit codes: 0 success, 2 config or mesh errors, 3 solver failures,
4 assumption or invariant violations (always for ``check``, otherwise
only with ``--assert``).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys

import numpy as np

from .diagnostics import REPORT_COLUMNS, energy_report
from .friction import SolverError
from .materials import DEFAULTS, default_ptc_model, validate_assumptions
from .mesh import (
    MeshError,
    build_dof_maps,
    build_unit_square_mesh,
    estimate_trace_norm,
    load_mesh,
)
from .scheme import ConfigError, Models, SolverConfig, advance, initialize, run_cascade

SIDES = ("left", "right", "bottom", "top")
TUPLE_OVERRIDES = ("f0", "f2")
STRING_OVERRIDES = ("phi_b",)
SOLVER_FLOAT_KEYS = ("T", "h", "dt", "eps", "tol_temperature", "tol_momentum",
                     "regularizer_coefficient")
SOLVER_INT_KEYS = ("max_iter_temperature", "max_iter_momentum", "seed")


@dataclasses.dataclass
class RunConfig:
    solver: SolverConfig
    mesh_file: str | None = None
    mesh_n: int = 8
    tags: dict | None = None
    overrides: dict = dataclasses.field(default_factory=dict)
    out_dir: str = "out"
    stride: int = 1
    diagnostics: bool = True
    assert_mode: bool = False
    config_hash: str = ""


def _parse_entries(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key or not val:
            raise ConfigError(f"line {ln}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {ln}: duplicate key '{key}'")
        entries[key] = val
    return entries


def _pop_typed(entries: dict[str, str], key: str, cast, default):
    if key not in entries:
        return default
    raw = entries.pop(key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': {exc}") from exc


def _parse_bool(raw: str) -> bool:
    if raw in ("on", "true", "yes", "1"):
        return True
    if raw in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got '{raw}'")


def parse_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    entries = _parse_entries(blob.decode("utf-8"))

    overrides = {}
    for key in list(entries):
        if not key.startswith("model."):
            continue
        name = key[len("model."):]
        if name not in DEFAULTS:
            raise ConfigError(f"unknown model override '{name}'")
        raw = entries.pop(key)
        if name in STRING_OVERRIDES:
            overrides[name] = raw
        elif name in TUPLE_OVERRIDES:
            parts = raw.split()
            if len(parts) != 2:
                raise ConfigError(f"key '{key}': expected two numbers")
            overrides[name] = (float(parts[0]), float(parts[1]))
        else:
            try:
                overrides[name] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"key '{key}': {exc}") from exc

    tags = {}
    for side in SIDES:
        tag = entries.pop(f"mesh.{side}", None)
        if tag is not None:
            tags[side] = tag

    solver_kwargs = {}
    for key in SOLVER_FLOAT_KEYS:
        val = _pop_typed(entries, f"solver.{key}", float, None)
        if val is not None:
            solver_kwargs[key] = val
    for key in SOLVER_INT_KEYS:
        val = _pop_typed(entries, f"solver.{key}", int, None)
        if val is not None:
            solver_kwargs[key] = val
    if "solver.joule_mode" in entries:
        solver_kwargs["joule_mode"] = entries.pop("solver.joule_mode")
    if "solver.cascade_levels" in entries:
        raw = entries.pop("solver.cascade_levels")
        solver_kwargs["cascade_levels"] = tuple(float(x) for x in raw.split())
    for key in ("T", "h", "dt"):
        if key not in solver_kwargs:
            raise ConfigError(f"missing required key 'solver.{key}'")
    solver = SolverConfig(**solver_kwargs)
    solver.validate()

    rc = RunConfig(
        solver=solver,
        mesh_file=entries.pop("mesh.file", None),
        mesh_n=_pop_typed(entries, "mesh.n", int, 8),
        tags=tags or None,
        overrides=overrides,
        out_dir=entries.pop("output.dir", "out"),
        stride=_pop_typed(entries, "output.stride", int, 1),
        diagnostics=_pop_typed(entries, "output.diagnostics", _parse_bool, True),
        assert_mode=_pop_typed(entries, "output.assert", _parse_bool, False),
        config_hash=hashlib.sha256(blob).hexdigest(),
    )
    if entries:
        raise ConfigError(f"unknown key '{sorted(entries)[0]}'")
    if rc.stride < 1:
        raise ConfigError("output.stride must be >= 1")
    return rc


def build_models(rc: RunConfig) -> Models:
    if rc.mesh_file is not None:
        mesh = load_mesh(rc.mesh_file)
    else:
        mesh = build_unit_square_mesh(rc.mesh_n, tags=rc.tags)
    dofs = build_dof_maps(mesh)
    mat, fric, bd = default_ptc_model(rc.overrides)
    return Models(mesh, dofs, mat, fric, bd)


def _format(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: str, header: list[str], rows, config_hash: str) -> None:
    lines = [",".join(header), f"# config_hash={config_hash}"]
    for row in rows:
        lines.append(",".join(_format(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trajectory(rc: RunConfig, mesh, states) -> None:
    n = mesh.n_nodes
    header = (["t"]
              + [f"theta[{i}]" for i in range(n)]
              + [f"phi[{i}]" for i in range(n)]
              + [f"u[{i}]" for i in range(2 * n)]
              + [f"v[{i}]" for i in range(2 * n)])
    rows = (np.concatenate(([s.t], s.theta, s.phi, s.u, s.v))
            for s in states[::rc.stride])
    _write_csv(os.path.join(rc.out_dir, "trajectory.csv"), header, rows, rc.config_hash)


def write_fields(rc: RunConfig, mesh, state) -> None:
    header = ["node", "x0", "x1", "theta", "phi", "u0", "u1", "v0", "v1", "xi0", "xi1"]
    u = state.u.reshape(-1, 2)
    v = state.v.reshape(-1, 2)
    xi = state.xi.reshape(-1, 2)
    rows = ([i, mesh.nodes[i, 0], mesh.nodes[i, 1], state.theta[i], state.phi[i],
             u[i, 0], u[i, 1], v[i, 0], v[i, 1], xi[i, 0], xi[i, 1]]
            for i in range(mesh.n_nodes))
    _write_csv(os.path.join(rc.out_dir, "fields.csv"), header, rows, rc.config_hash)


def write_diagnostics(rc: RunConfig, report) -> None:
    _write_csv(os.path.join(rc.out_dir, "diagnostics.csv"),
               list(report.columns), report.data, rc.config_hash)


def write_cascade(rc: RunConfig, report) -> None:
    header = ["h", "regularizer", "theta_cauchy", "phi_cauchy", "v_cauchy"]
    rows = []
    for i, lev in enumerate(report.levels):
        cauchy = ([report.theta_cauchy[i - 1], report.phi_cauchy[i - 1],
                   report.v_cauchy[i - 1]] if i else [np.nan, np.nan, np.nan])
        rows.append([lev, report.regularizer[i]] + cauchy)
    _write_csv(os.path.join(rc.out_dir, "cascade.csv"), header, rows, rc.config_hash)


def _preflight(models) -> tuple[list[str], float]:
    gamma = estimate_trace_norm(models.mesh, models.dofs)
    report = validate_assumptions(models.mat, models.fric, models.bd, gamma)
    return report.lines(), gamma if report.all_passed() else -gamma


def run_command(rc: RunConfig) -> int:
    models = build_models(rc)
    lines, signed_gamma = _preflight(models)
    for line in lines:
        print(line)
    if signed_gamma < 0 and rc.assert_mode:
        print("assumption validation failed", file=sys.stderr)
        return 4

    os.makedirs(rc.out_dir, exist_ok=True)
    ws = initialize(models, rc.solver)
    states = advance(ws)
    write_trajectory(rc, models.mesh, states)
    write_fields(rc, models.mesh, states[-1])
    if rc.diagnostics:
        report = energy_report(models, states, rc.solver)
        write_diagnostics(rc, report)
        for violation in report.violations:
            print(f"violation: {violation}", file=sys.stderr)
        if report.violations and rc.assert_mode:
            return 4
    if len(rc.solver.cascade_levels) >= 1:
        cascade = run_cascade(models, rc.solver)
        write_cascade(rc, cascade)
    print(f"run complete: {len(states)} states -> {rc.out_dir}")
    return 0


def cascade_command(rc: RunConfig) -> int:
    models = build_models(rc)
    if not rc.solver.cascade_levels:
        raise ConfigError("cascade requires solver.cascade_levels")
    os.makedirs(rc.out_dir, exist_ok=True)
    report = run_cascade(models, rc.solver)
    write_cascade(rc, report)
    print(f"cascade complete: levels {list(rc.solver.cascade_levels)} -> {rc.out_dir}")
    return 0


def check_command(rc: RunConfig) -> int:
    models = build_models(rc)
    gamma = estimate_trace_norm(models.mesh, models.dofs)
    report = validate_assumptions(models.mat, models.fric, models.bd, gamma)
    for line in report.lines():
        print(line)
    used = models.fric.F_bar * models.fric.d_mu * gamma**2
    print(f"A8 margin: delta={models.mat.delta!r} vs F_bar*d_mu*trace^2={used!r} "
          f"(margin={models.mat.delta - used!r})")
    if not report.all_passed():
        failed = ", ".join(c.id for c in report.failures())
        print(f"failed assumptions: {failed}", file=sys.stderr)
        return 4
    print("all assumptions pass")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thermocontact",
        description="Coupled thermal, electric, and frictional-contact simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "simulate and write trajectory outputs"),
                            ("check", "validate model assumptions, no simulation"),
                            ("cascade", "run only the delay-refinement cascade")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--assert", dest="assert_mode", action="store_true",
                       help="exit 4 on any assumption or invariant violation")
        p.add_argument("--stride", type=int, default=None,
                       help="keep every stride-th trajectory row")
    args = parser.parse_args(argv)

    try:
        rc = parse_config(args.config)
        if args.out is not None:
            rc.out_dir = args.out
        if args.assert_mode:
            rc.assert_mode = True
        if args.stride is not None:
            if args.stride < 1:
                raise ConfigError("--stride must be >= 1")
            rc.stride = args.stride
        command = {"run": run_command, "check": check_command,
                   "cascade": cascade_command}[args.command]
        return command(rc)
    except (ConfigError, MeshError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
