"""Command-line entry point: parse configs, dispatch computations, persist artifacts.

Config files are flat ``key=value`` lines with dotted section prefixes
(``solver.tol_lambda=1e-8``); full-line comments start with ``#``.  Every key
must be known, all numeric fields are validated against the module
preconditions before dispatch, and all randomness flows from the single
``seed`` key, so a repeated run writes byte-identical CSV outputs.

Exit codes: 0 success, 2 config or validation failure, 3 numerical failure
(including failed experiment checks), 4 non-convergence under ``--strict``.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import (DegenerateExponentError, FallbackRequired, GeometryError,
                     NumericalError)
from .meshes import Field, Mesh1D, disk_mesh, read_field_csv, rectangle
from .orlicz import (NFunctionParams, closed_form_norm, luxemburg_norm, lp_norm,
                     modular, rescaled_norm, weight_field_from_descriptor)
from .eigensolver import (SolverOptions, first_eigenpair, minimax_upper_bound,
                          save_eigenpair)
from . import experiments


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": "0",
    "mesh.dim": "1",
    "mesh.a": "0.0",
    "mesh.b": "1.0",
    "mesh.n": "512",
    "mesh.x0": "0.0",
    "mesh.x1": "1.0",
    "mesh.y0": "0.0",
    "mesh.y1": "1.0",
    "mesh.nx": "96",
    "mesh.ny": "96",
    "mesh.mask": "rect",
    "phase.p": "2.0",
    "phase.q": "2.4",
    "phase.weight": "constant:1",
    "phase.scale_h": "1",
    "solver.tol_lambda": "1e-9",
    "solver.tol_residual": "1e-5",
    "solver.max_iter": "800",
    "solver.restarts": "5",
    "solver.armijo_init": "1.0",
    "solver.armijo_shrink": "0.5",
    "solver.armijo_slope": "1e-4",
    "norm.field": "",
    "norm.constant": "1.0",
    "eig.m_max": "6",
    "experiment.steps": "16",
    "experiment.delta0": "1.0",
    "experiment.h_list": "1,2,4,8,16",
    "experiment.m_max": "6",
    "experiment.domains": "2,4,8,16,32,64",
    "experiment.workers": "1",
    "output.dir": ".",
}


def parse_config_text(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        cfg[key] = value.strip()
    return cfg


def load_config(path=None, overrides=None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path!r} does not exist")
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
    return cfg


def _get_float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from exc


def _get_int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from exc


def build_mesh(cfg):
    dim = _get_int(cfg, "mesh.dim")
    if dim == 1:
        a, b, n = _get_float(cfg, "mesh.a"), _get_float(cfg, "mesh.b"), _get_int(cfg, "mesh.n")
        if not b > a:
            raise ConfigError("mesh.b must exceed mesh.a")
        if n < 2:
            raise ConfigError("mesh.n must be at least 2")
        return Mesh1D(a, b, n)
    if dim == 2:
        x0, x1 = _get_float(cfg, "mesh.x0"), _get_float(cfg, "mesh.x1")
        y0, y1 = _get_float(cfg, "mesh.y0"), _get_float(cfg, "mesh.y1")
        nx, ny = _get_int(cfg, "mesh.nx"), _get_int(cfg, "mesh.ny")
        kind = cfg["mesh.mask"]
        if kind == "rect":
            return rectangle(nx, ny, x0, x1, y0, y1)
        if kind == "disk":
            h = (x1 - x0) / nx
            radius = 0.5 * min(x1 - x0, y1 - y0)
            return disk_mesh(radius, h, center=(0.5 * (x0 + x1), 0.5 * (y0 + y1)))
        raise ConfigError(f"unknown mesh.mask {kind!r}")
    raise ConfigError("mesh.dim must be 1 or 2")


def build_phase(cfg, mesh) -> NFunctionParams:
    p, q = _get_float(cfg, "phase.p"), _get_float(cfg, "phase.q")
    h = _get_int(cfg, "phase.scale_h")
    if not p > 1:
        raise ConfigError("invariant violated: phase.p > 1")
    if q < p:
        raise ConfigError("invariant violated: phase.p <= phase.q")
    try:
        weight = weight_field_from_descriptor(mesh, cfg["phase.weight"])
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad phase.weight: {exc}") from exc
    return NFunctionParams(p, q, weight, scale_h=h)


def build_solver_options(cfg) -> SolverOptions:
    try:
        return SolverOptions(
            tol_lambda=_get_float(cfg, "solver.tol_lambda"),
            tol_residual=_get_float(cfg, "solver.tol_residual"),
            max_iter=_get_int(cfg, "solver.max_iter"),
            restarts=_get_int(cfg, "solver.restarts"),
            rng_seed=_get_int(cfg, "seed"),
            armijo_init=_get_float(cfg, "solver.armijo_init"),
            armijo_shrink=_get_float(cfg, "solver.armijo_shrink"),
            armijo_slope=_get_float(cfg, "solver.armijo_slope"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _outdir(cfg):
    path = cfg["output.dir"]
    os.makedirs(path, exist_ok=True)
    return path


def cmd_norm(cfg) -> int:
    mesh = build_mesh(cfg)
    p, q = _get_float(cfg, "phase.p"), _get_float(cfg, "phase.q")
    if p >= q:
        raise ConfigError("invariant violated: phase.p < phase.q (closed form "
                          "needs strictly separated exponents)")
    H = build_phase(cfg, mesh)
    if cfg["norm.field"]:
        if not os.path.exists(cfg["norm.field"]):
            raise ConfigError(f"field file {cfg['norm.field']!r} does not exist")
        u = read_field_csv(cfg["norm.field"], mesh)
    else:
        u = Field.constant(mesh, _get_float(cfg, "norm.constant"))

    rho = modular(u, H)
    bis = luxemburg_norm(u, H)
    print(f"modular={rho:.12g}")
    print(f"luxemburg_norm={bis.value:.12g} method={bis.method} "
          f"unit_defect={abs(bis.modular_at_unit - 1.0) if bis.value > 0 else 0.0:.3g}")
    try:
        cf = closed_form_norm(u, H)
        print(f"closed_form_norm={cf.value:.12g} method={cf.method}")
    except FallbackRequired:
        print(f"closed_form_norm=fallback lp_norm={lp_norm(u, H.hp):.12g}")
    except DegenerateExponentError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"rescaled_norm={rescaled_norm(u, H):.12g}")
    return 0


def cmd_eig(cfg, strict=False) -> int:
    mesh = build_mesh(cfg)
    H = build_phase(cfg, mesh)
    opts = build_solver_options(cfg)
    pair = first_eigenpair(mesh, H, opts)
    tag = (f"p{H.p:g}_q{H.q:g}_n{mesh.n_cells}_seed{opts.rng_seed}")
    prefix = os.path.join(_outdir(cfg), f"eig_{tag}")
    csv_path, meta_path = save_eigenpair(prefix, pair, H, opts)
    print(f"lambda={pair.lambda_:.12g}")
    print(f"residual={pair.residual:.6g}")
    print(f"s_of_u={pair.s_of_u:.12g}")
    print(f"iterations={pair.iterations}")
    print(f"converged={str(pair.converged).lower()}")
    print(f"wrote {csv_path} {meta_path}")
    if strict and not pair.converged:
        return 4
    return 0


def cmd_eigm(cfg, strict=False) -> int:
    mesh = build_mesh(cfg)
    H = build_phase(cfg, mesh)
    opts = build_solver_options(cfg)
    m_max = _get_int(cfg, "eig.m_max")
    if m_max < 1:
        raise ConfigError("eig.m_max must be >= 1")
    lines = ["m,upper_bound"]
    print("m  upper_bound")
    for m in range(1, m_max + 1):
        bound = minimax_upper_bound(mesh, H, m, opts)
        print(f"{m}  {bound:.12g}")
        lines.append(f"{m},{bound:.17g}")
    path = os.path.join(_outdir(cfg), f"eigm_seed{opts.rng_seed}.csv")
    with open(path, "w") as fh:
        fh.write("# schema=1\n" + "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


EXPERIMENT_NAMES = ("stability", "domains", "faberkrahn", "largeexp", "weyl",
                    "symmetry")


def _nested_family(cfg):
    hs = [int(s) for s in cfg["experiment.domains"].split(",") if s]
    if any(h < 2 for h in hs):
        raise ConfigError("experiment.domains entries must be >= 2")
    if _get_int(cfg, "mesh.dim") == 1:
        a, b = _get_float(cfg, "mesh.a"), _get_float(cfg, "mesh.b")
        n = _get_int(cfg, "mesh.n")
        length = b - a
        family = [Mesh1D(a, a + length * (1 - 1 / h), max(16, round(n * (1 - 1 / h))))
                  for h in hs]
        family.append(Mesh1D(a, b, n))
        return family
    base = build_mesh(cfg)
    xs = base.cell_centers()
    cx = 0.5 * (base.x0 + base.x1)
    cy = 0.5 * (base.y0 + base.y1)
    wx, wy = base.x1 - base.x0, base.y1 - base.y0
    family = []
    for h in sorted(hs):
        f = 1 - 1 / h
        keep = ((np.abs(xs[:, 0] - cx) < 0.5 * f * wx)
                & (np.abs(xs[:, 1] - cy) < 0.5 * f * wy))
        mask = base.to_grid(keep.astype(float)) > 0
        family.append(rectangle(base.nx, base.ny, base.x0, base.x1, base.y0,
                                base.y1, mask=mask))
    family.append(base)
    return family


def cmd_experiment(cfg, name: str) -> int:
    if name not in EXPERIMENT_NAMES:
        raise ConfigError(f"unknown experiment {name!r}; choose from "
                          f"{', '.join(EXPERIMENT_NAMES)}")
    opts = build_solver_options(cfg)
    workers = _get_int(cfg, "experiment.workers")
    p, q = _get_float(cfg, "phase.p"), _get_float(cfg, "phase.q")

    if name == "stability":
        mesh = build_mesh(cfg)
        weight = weight_field_from_descriptor(mesh, cfg["phase.weight"])
        rep = experiments.run_stability(
            p, q, steps=_get_int(cfg, "experiment.steps"),
            delta0=_get_float(cfg, "experiment.delta0"),
            mesh=mesh, weight=weight, opts=opts, workers=workers)
    elif name == "domains":
        rep = experiments.run_domain_monotonicity(
            _nested_family(cfg), p, q,
            weight_descriptor=cfg["phase.weight"], opts=opts, workers=workers)
    elif name == "faberkrahn":
        if cfg["phase.weight"] not in ("constant:1", "constant:1.0"):
            raise ConfigError("faberkrahn requires phase.weight=constant:1")
        cfg2 = dict(cfg)
        cfg2["mesh.dim"] = "2"
        rep = experiments.run_faber_krahn(build_mesh(cfg2), p, q, opts=opts)
    elif name == "largeexp":
        h_list = tuple(int(s) for s in cfg["experiment.h_list"].split(",") if s)
        rep = experiments.run_large_exponents(build_mesh(cfg), p, q,
                                              h_list=h_list, opts=opts)
    elif name == "weyl":
        rep = experiments.run_weyl(build_mesh(cfg), p, q,
                                   m_max=_get_int(cfg, "experiment.m_max"),
                                   opts=opts, workers=workers)
    else:
        if cfg["phase.weight"] not in ("constant:1", "constant:1.0"):
            raise ConfigError("symmetry requires phase.weight=constant:1")
        rep = experiments.run_symmetry(build_mesh(cfg), p, q, opts=opts)

    out = _outdir(cfg)
    csv_path = os.path.join(out, f"{name}.csv")
    svg_path = os.path.join(out, f"{name}.svg")
    rep.save(csv_path, svg_path, plot=rep.plot)
    print(rep.summary_text())
    print(f"wrote {csv_path} {svg_path}")
    return 0 if rep.all_pass else 3


def _parse_args(argv):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key=value config file")
    common.add_argument("--seed", type=int, help="override the RNG seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--strict", action="store_true",
                        help="exit 4 when the solver does not converge")
    common.add_argument("--resolution", type=int,
                        help="override mesh.n (1D) and mesh.nx/ny (2D)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    parser = argparse.ArgumentParser(
        prog="doublephase",
        description="Double-phase Luxemburg norms, eigenpairs and experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("norm", parents=[common],
                   help="print modular and norms of a field")
    sub.add_parser("eig", parents=[common],
                   help="compute and persist the first eigenpair")
    sub.add_parser("eigm", parents=[common],
                   help="table of minimax upper bounds")
    exp = sub.add_parser("experiment", parents=[common],
                         help="run a named experiment")
    exp.add_argument("name")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        cfg = load_config(args.config, overrides)
        if args.seed is not None:
            cfg["seed"] = str(args.seed)
        if args.out is not None:
            cfg["output.dir"] = args.out
        if args.resolution is not None:
            cfg["mesh.n"] = str(args.resolution)
            cfg["mesh.nx"] = str(args.resolution)
            cfg["mesh.ny"] = str(args.resolution)

        if args.command == "norm":
            return cmd_norm(cfg)
        if args.command == "eig":
            return cmd_eig(cfg, strict=args.strict)
        if args.command == "eigm":
            return cmd_eigm(cfg, strict=args.strict)
        return cmd_experiment(cfg, args.name)
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FallbackRequired) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
