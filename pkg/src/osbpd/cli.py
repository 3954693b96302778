"""Command line entry point: ``osbpd run|bench|dump-model|validate|list``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, bundled_scenarios, load_config, resolve_config_path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError([f"--set {text!r}: expected key=value"])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _load(args):
    overrides = dict(_parse_override(s) for s in getattr(args, "set", None) or [])
    return load_config(resolve_config_path(args.config), overrides)


def cmd_validate(args) -> int:
    cfg = _load(args)
    line = (f"{cfg.name}: ok ({cfg.mode.value}, dx={cfg.dx:g}, horizon={cfg.delta:g}, "
            f"m_ratio={cfg.m_ratio:g}, integrator={cfg.integrator.kind}")
    if cfg.integrator.kind == "explicit":
        line += f", dt={cfg.integrator.dt:g} < bound {cfg.time_step_bound:.6g}"
    print(line + ")")
    return EXIT_OK


def cmd_run(args) -> int:
    from .scenario import run_scenario

    cfg = _load(args)
    result = run_scenario(cfg, output_dir=args.output, progress=args.verbose,
                          max_steps=args.max_steps)
    r = result.report
    print(f"{cfg.name}: {r['status']} after {r['steps']} steps; {r['nodes']} nodes, "
          f"{r['bonds']} bonds, solver {r['solver_seconds']:.3f} s "
          f"({r['seconds_per_1000_steps']:.4f} s per 1000)")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .scenario import run_benchmark, write_benchmark_csv

    kernels = [k for k in args.kernels.split(",") if k]
    rows = []
    for item in args.config:
        cfg = load_config(resolve_config_path(item),
                          dict(_parse_override(s) for s in args.set or []))
        rows += run_benchmark(cfg, kernels, args.iters, args.warmup, case=cfg.name)
    cols = ("case", "kernel", "nodes", "bonds", "iterations", "seconds", "speedup_vs_loop")
    print(",".join(cols))
    for r in rows:
        print(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
    if args.out:
        write_benchmark_csv(args.out, rows)
    return EXIT_OK


def cmd_dump_model(args) -> int:
    from .assembly import write_matrix_market
    from .discretize import dump_model_csv
    from .scenario import prepare

    cfg = _load(args)
    p = prepare(cfg)
    out = Path(args.output or Path(cfg.output.directory) / "model")
    dump_model_csv(p.model, out)
    if not args.no_matrices:
        write_matrix_market(p.ops, out)
    print(f"{cfg.name}: {p.model.n_nodes} nodes, {p.model.n_bonds} bonds "
          f"({p.seeded.size} pre-cracked) written to {out}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name, path in sorted(bundled_scenarios().items()):
        print(f"{name}\t{path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="osbpd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="TOML file or bundled scenario name")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a dotted config key (value parsed as JSON when possible)")
        return p

    p = with_config(sub.add_parser("run", help="run a scenario"))
    p.add_argument("--output", help="output directory (default: output.directory)")
    p.add_argument("--max-steps", type=int, help="stop after this many steps")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time the solver loop per kernel")
    p.add_argument("config", nargs="+", help="TOML files or bundled scenario names")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--kernels", default="matrix,loop")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=None, help="warm-up steps (default min(100, iters))")
    p.add_argument("--out", help="write the table to this CSV file")
    p.set_defaults(func=cmd_bench)

    p = with_config(sub.add_parser("dump-model", help="write nodes, bonds and operators"))
    p.add_argument("--output", help="output directory")
    p.add_argument("--no-matrices", action="store_true", help="skip the MatrixMarket files")
    p.set_defaults(func=cmd_dump_model)

    p = with_config(sub.add_parser("validate", help="check a config without running it"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    from .integrate import NumericalInstability

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalInstability as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
