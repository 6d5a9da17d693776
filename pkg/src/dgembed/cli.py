"""Command-line entry point.

Subcommands:
    generate  PDB file or synthetic chain -> instance file
    solve     instance file -> XYZ coordinates + metrics
    bench     experiment spec file -> row/aggregate/plot-data reports
    eval      XYZ file vs reference XYZ -> metrics

Every flag can also be set through an environment variable with the
DGEMBED_ prefix (e.g. DGEMBED_SEED=7); explicit flags win. Exit codes:
0 success, 1 usage error, 2 input error, 3 numerical failure.
"""

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .bench import (ExperimentSpec, emit_report, parse_experiment_spec,
                    reconstruct, run_experiment, _generate, _load_atoms)
from .core import SolverConfig, ValidationError, validate_instance
from .instances import (InstanceFormatError, PDBParseError, read_instance,
                        read_xyz, write_instance, write_xyz)
from .metrics import ldme, rmsd, violation_stats
from .solver import SolveDivergence

ENV_PREFIX = "DGEMBED_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _env(name: str, default, cast):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        return default


def _add_solver_flags(p: _Parser):
    p.add_argument("--seed", type=int, default=_env("seed", 0, int))
    p.add_argument("--threads", type=int, default=_env("threads", 1, int))
    p.add_argument("--alpha-start", type=float, default=_env("alpha_start", 1.0, float))
    p.add_argument("--alpha-end", type=float, default=_env("alpha_end", 0.008, float))
    p.add_argument("--alpha-rate", type=float, default=_env("alpha_rate", 0.3, float))
    p.add_argument("--pivots", type=int, default=_env("pivots", 250, int))
    p.add_argument("--theta", type=float, default=_env("theta", 0.6, float))


def _solver_config(args) -> SolverConfig:
    return SolverConfig(alpha_start=args.alpha_start, alpha_end=args.alpha_end,
                        alpha_rate=args.alpha_rate, theta=args.theta,
                        seed=args.seed, threads=args.threads, pivots=args.pivots)


def build_parser() -> _Parser:
    parser = _Parser(prog="dgembed",
                     description="3D reconstruction from interval distance constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build an instance file")
    gen.add_argument("input", nargs="?", default=None,
                     help="PDB file; omit together with --synthetic for a chain")
    gen.add_argument("--synthetic", type=int, default=None, metavar="N",
                     help="generate an N-point folded chain instead of reading a PDB")
    gen.add_argument("--spacing", type=float, default=1.5)
    gen.add_argument("--recipe", choices=("normal", "bonds", "weighted"),
                     default=_env("recipe", "normal", str))
    gen.add_argument("--p", type=float, default=_env("p", 0.5, float))
    gen.add_argument("--sigma", type=float, default=_env("sigma", 0.1, float))
    gen.add_argument("--seed", type=int, default=_env("seed", 0, int))
    gen.add_argument("--out", default=_env("out", ".", str))

    slv = sub.add_parser("solve", help="embed an instance file")
    slv.add_argument("instance")
    slv.add_argument("--init", choices=("pivot", "sphere", "cube"), default="pivot")
    slv.add_argument("--out", default=_env("out", ".", str))
    _add_solver_flags(slv)

    ben = sub.add_parser("bench", help="run a replicated experiment")
    ben.add_argument("spec", help="experiment spec file (key value lines)")
    ben.add_argument("--out", default=_env("out", ".", str))
    ben.add_argument("--format", choices=("csv", "tsv", "json"),
                     default=_env("format", "csv", str))
    ben.add_argument("--threads", type=int, default=_env("threads", 1, int))
    ben.add_argument("--no-times", action="store_true",
                     help="write 0.0 wall times for byte-reproducible reports")

    ev = sub.add_parser("eval", help="compare coordinates against a reference")
    ev.add_argument("coords", help="XYZ file to evaluate")
    ev.add_argument("reference", help="reference XYZ file")
    ev.add_argument("--instance", default=None,
                    help="instance file for LDME/violation metrics")
    return parser


def _cmd_generate(args) -> int:
    from .instances import synthetic_chain, parse_pdb_atoms
    if (args.input is None) == (args.synthetic is None):
        print("generate: pass exactly one of <input.pdb> or --synthetic N", file=sys.stderr)
        return EXIT_USAGE
    if args.synthetic is not None:
        atoms = synthetic_chain(args.synthetic, args.spacing, seed=args.seed)
        stem = f"chain{args.synthetic}"
    else:
        try:
            with open(args.input, "r", encoding="utf-8") as fh:
                atoms = parse_pdb_atoms(fh.read())
        except OSError as exc:
            print(f"generate: cannot read {args.input}: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except PDBParseError as exc:
            print(f"generate: {exc}", file=sys.stderr)
            return EXIT_INPUT
        stem = os.path.splitext(os.path.basename(args.input))[0]
    if atoms.n == 0:
        print("generate: no atoms in input", file=sys.stderr)
        return EXIT_INPUT
    inst = _generate(atoms, args.recipe, args.p, args.sigma, args.seed)
    inst.meta["source"] = stem
    os.makedirs(args.out, exist_ok=True)
    name = f"{stem}_{args.recipe}_p{args.p}_sigma{args.sigma}_seed{args.seed}.dgp"
    path = os.path.join(args.out, name)
    write_instance(path, inst)
    diag = validate_instance(inst)
    print(f"wrote {path}: n={inst.n} m={inst.m} components={diag.components}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    try:
        inst = read_instance(args.instance)
    except OSError as exc:
        print(f"solve: cannot read {args.instance}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InstanceFormatError as exc:
        print(f"solve: {exc}", file=sys.stderr)
        return EXIT_INPUT
    cfg = _solver_config(args)
    t0 = time.perf_counter()
    try:
        coords, trace = reconstruct(inst, cfg, init=args.init)
    except SolveDivergence as exc:
        print(f"solve: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    elapsed = time.perf_counter() - t0
    stats = violation_stats(coords, inst)
    metrics = {
        "ldme": ldme(coords, inst),
        "violations": stats.count,
        "violation_fraction": stats.fraction,
        "max_edge_error": stats.max_error,
        "iterations": trace.iterations,
        "q": trace.q,
        "time_s": elapsed,
    }
    if inst.reference is not None:
        metrics["rmsd_A"] = rmsd(coords, inst.reference)
    os.makedirs(args.out, exist_ok=True)
    xyz_path = os.path.join(args.out, "solution.xyz")
    write_xyz(xyz_path, coords, comment=f"dgembed solve seed={args.seed}")
    metrics_path = os.path.join(args.out, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for key in sorted(metrics):
        print(f"{key}: {metrics[key]}")
    print(f"wrote {xyz_path}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = parse_experiment_spec(fh.read())
    except OSError as exc:
        print(f"bench: cannot read {args.spec}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.threads != 1:
        spec = dataclasses.replace(
            spec, solver=dataclasses.replace(spec.solver, threads=args.threads))
    if args.no_times:
        spec = dataclasses.replace(spec, record_time=False)
    if spec.source != "synthetic" and not os.path.exists(spec.source):
        print(f"bench: input {spec.source!r} not found", file=sys.stderr)
        return EXIT_INPUT
    report = run_experiment(spec)
    paths = emit_report(report, args.format, args.out)
    for agg in report.aggregate():
        print(f"p={agg['p']} sigma={agg['sigma']}: "
              f"mean rmsd {agg['mean_rmsd_A']:.4f} A over {agg['rows']} rows "
              f"({agg['failed']} failed)")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        _, coords = read_xyz(args.coords)
        _, reference = read_xyz(args.reference)
    except OSError as exc:
        print(f"eval: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InstanceFormatError as exc:
        print(f"eval: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if coords.shape != reference.shape:
        print(f"eval: size mismatch {coords.shape} vs {reference.shape}", file=sys.stderr)
        return EXIT_INPUT
    print(f"rmsd_A: {rmsd(coords, reference)}")
    if args.instance:
        try:
            inst = read_instance(args.instance)
        except (OSError, InstanceFormatError) as exc:
            print(f"eval: {exc}", file=sys.stderr)
            return EXIT_INPUT
        stats = violation_stats(coords, inst)
        print(f"ldme: {ldme(coords, inst)}")
        print(f"violations: {stats.count}")
        print(f"violation_fraction: {stats.fraction}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"generate": _cmd_generate, "solve": _cmd_solve,
                "bench": _cmd_bench, "eval": _cmd_eval}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"dgembed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolveDivergence as exc:
        print(f"dgembed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
