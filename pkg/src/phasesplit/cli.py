"""Command line interface: ``phasesplit optimize|evaluate|export|gradcheck``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .elasticity import CGNotConverged, assemble_operator, solve_corrector
from .gradcheck import gradcheck_suite
from .homogenize import effective_table, load_case
from .io import export_fields, read_field, von_mises, write_field
from .mesh import build_mesh
from .optimizer import continuation_run

log = logging.getLogger("phasesplit")

EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_CHECK = 2, 3, 4, 5


def _print_table(table, out=None):
    out = out or sys.stdout
    labels = list(table.components[0])
    print(f"{'':8s}{'m=0':>12s}{'m=1':>12s}", file=out)
    for lab in labels:
        comp = f"C{lab[1]}{lab[2]}{lab[1]}{lab[2]}"
        print(f"{comp:8s}{table.components[0][lab]:12.5g}{table.components[1][lab]:12.5g}", file=out)
    print(f"{'volume':8s}{table.volumes[0]:12.5g}{table.volumes[1]:12.5g}", file=out)


def _von_mises_fields(cfg, mesh, v):
    fields = {}
    for m in (0, 1):
        op = assemble_operator(mesh, v, cfg.materials[m], m, cfg.delta, cfg.interpolation)
        for ld in cfg.load_cases():
            sol = solve_corrector(op, ld, tol=cfg.solver.get("tol", 1e-8))
            vm = von_mises(op, ld, sol)
            fields[f"vm_phase{m}_{ld.label}"] = vm
            fields[f"log10_vm_phase{m}_{ld.label}"] = np.log10(np.maximum(vm, 1e-300))
    return fields


def cmd_optimize(args):
    cfg = parse_config(args.config)
    if args.schedule:
        data = cfg.to_dict()
        data["schedule"] = [int(x) for x in args.schedule.split(",")]
        cfg = type(cfg)(**{k: data.get(k, getattr(cfg, k)) for k in data})
    root = Path(args.out or cfg.output["directory"])
    for tag, sub in cfg.expand_sweep():
        out = root / tag if tag else root
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(sub.dumps())
        opt = sub.optimizer_config()
        if args.max_iter is not None:
            opt.max_iter = args.max_iter
        log.info("optimizing %s -> %s", tag or args.config, out)
        rec = continuation_run(sub.make_objective, sub.dimension, opt,
                               checkpoint_dir=out / "checkpoints", hash_payload=sub.to_dict())
        if rec.status.startswith("failed"):
            raise CGNotConverged(float("nan"), rec.iterations, rec.v) if "CG" in rec.status else RuntimeError(rec.status)
        mesh = build_mesh(sub.dimension, rec.N)
        table = effective_table(mesh, rec.v, sub.materials, sub.load_cases() if args.active_only else
                                _all_loads(sub), sub.delta, sub.interpolation, beta=sub.beta)
        cells = _von_mises_fields(sub, mesh, rec.v) if args.von_mises else None
        export_fields(out, mesh, rec.v, cell_fields=cells, table=table, history=rec.history)
        k = int(sub.output.get("tile", 1))
        if k > 1:
            write_field(out / f"field_tiled{k}.vtk", mesh, rec.v, k=k)
        (out / "levels.json").write_text(json.dumps(rec.levels, indent=2, default=float))
        print(f"[{tag or 'run'}] status={rec.status} J={rec.final_J:.6g} wall={rec.wall_time:.1f}s")
        _print_table(table)
    return 0


def _all_loads(cfg):
    from .homogenize import canonical_loads

    return canonical_loads(cfg.dimension, cfg.beta)


def cmd_evaluate(args):
    cfg = parse_config(args.config)
    mesh, v = read_field(args.field)
    if mesh.d != cfg.dimension:
        raise ConfigError(f"dimension: field is {mesh.d}D but config says {cfg.dimension}D")
    table = effective_table(mesh, v, cfg.materials, _all_loads(cfg), cfg.delta, cfg.interpolation,
                            tol=cfg.solver.get("tol", 1e-8), beta=cfg.beta)
    _print_table(table)
    if args.csv:
        from .io import write_table_csv

        write_table_csv(args.csv, table)
    return 0


def cmd_export(args):
    mesh, v = read_field(args.field)
    out = Path(args.out)
    cells = None
    if args.von_mises:
        # without a config fall back to the equal-material compression preset
        default = "equal-3compr" if mesh.d == 3 else "2d-2compr"
        cfg = parse_config(args.config or default)
        if cfg.dimension != mesh.d:
            raise ConfigError(f"dimension: field is {mesh.d}D but config says {cfg.dimension}D")
        cells = _von_mises_fields(cfg, mesh, v)
    for p in export_fields(out, mesh, v, cell_fields=cells, k=args.tile):
        print(p)
    return 0


def cmd_gradcheck(args):
    cfg = parse_config(args.config)

    def loads_for(d):
        labs = [lab for lab in cfg.loads if max(int(lab[1]), int(lab[2])) <= d][:2]
        for extra in ("A11", "A22", "A12"):
            if len(labs) >= 2:
                break
            if extra not in labs:
                labs.append(extra)
        return [load_case(lab, cfg.beta, d) for lab in labs]

    results = gradcheck_suite(cfg.materials, loads_for, seed=args.seed, N=args.N, q_max=cfg.q_max,
                              delta=cfg.delta, interpolation=cfg.interpolation)
    worst = 0.0
    for d, p, eta, err in results:
        print(f"d={d} N={args.N} p={p:g} eta={eta:g}  rel.err={err:.3e}")
        worst = max(worst, err)
    print(f"max relative error {worst:.3e}")
    return 0 if worst <= args.threshold else EXIT_CHECK


def build_parser():
    ap = argparse.ArgumentParser(prog="phasesplit", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log every optimizer iteration")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run a coarse-to-fine optimization")
    p.add_argument("config", help="TOML file or preset name")
    p.add_argument("--out", help="output directory (default: from config)")
    p.add_argument("--schedule", help="comma-separated N values, e.g. 9,17,33")
    p.add_argument("--max-iter", type=int, help="outer iterations per level")
    p.add_argument("--von-mises", action="store_true", help="also export von Mises stresses")
    p.add_argument("--active-only", action="store_true", help="table only for the configured loads")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="effective tensor table of a stored field")
    p.add_argument("config")
    p.add_argument("field", help="VTK field file written by optimize/export")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="re-export a field (tiling, von Mises)")
    p.add_argument("field")
    p.add_argument("--tile", type=int, default=1)
    p.add_argument("--von-mises", action="store_true")
    p.add_argument("--config", help="materials/loads for --von-mises (default: equal-material preset)")
    p.add_argument("--out", default="export")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", help="finite-difference check of dJ/dv")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--N", type=int, default=5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CGNotConverged, FloatingPointError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
