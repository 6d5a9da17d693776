"""Experiment harness: replicated instance generation, solves, reports.

Each experiment cell (p, sigma) generates `instance_replicates` fresh
instances and solves each `run_replicates` times with fresh solver
seeds; the reported wall time covers the solve + refine pipeline only.
Seeds derive from the master seed as seed + 1000*i (instances) and
seed + 1000*i + j (runs), so any row can be reproduced on its own.
"""

import concurrent.futures
import json
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Instance, SolverConfig, ValidationError, midpoint_distances
from .initlayout import layout_hypersphere, layout_pivot_mds, layout_random_cube
from .instances import (gen_bonds_instance, gen_normal_instance,
                        gen_weighted_instance, parse_pdb_atoms, synthetic_chain)
from .localopt import SAConfig, refine_workflow
from .metrics import ldme, rmsd, violation_stats
from .solver import SolveTrace, maxent_solve

RECIPES = ("normal", "bonds", "weighted")


def initial_layout(inst: Instance, cfg: SolverConfig, kind: str = "pivot") -> np.ndarray:
    """Dispatch to a layout; tiny or edgeless graphs fall back to random."""
    g = inst.graph
    d = midpoint_distances(inst)
    if kind == "pivot" and g.n >= 3 and g.m > 0:
        return layout_pivot_mds(g, d, min(cfg.pivots, g.n), cfg.seed)
    if kind == "sphere":
        return layout_hypersphere(g, d, cfg.seed)
    if kind not in ("pivot", "cube", "sphere"):
        raise ValidationError(f"unknown initial layout '{kind}'")
    side = float(max(1.0, (d.mean() if g.m else 1.0) * np.cbrt(g.n)))
    return layout_random_cube(g.n, side, cfg.seed)


def reconstruct(inst: Instance, cfg: Optional[SolverConfig] = None,
                init: str = "pivot") -> tuple[np.ndarray, SolveTrace]:
    """Full pipeline: initial layout, maxent solve, local refinement."""
    cfg = cfg or SolverConfig()
    x0 = initial_layout(inst, cfg, init)
    x, trace = maxent_solve(inst, cfg, x0)
    refined = refine_workflow(inst, x, SAConfig(seed=cfg.seed + 101))
    return refined, trace


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark description, possibly a (p, sigma) grid."""

    source: str = "synthetic"
    recipe: str = "normal"
    p_values: tuple = (0.5,)
    sigma_values: tuple = (0.1,)
    instance_replicates: int = 3
    run_replicates: int = 3
    seed: int = 0
    n: int = 400
    spacing: float = 1.5
    solver: SolverConfig = field(default_factory=SolverConfig)
    record_time: bool = True

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ValidationError(f"recipe must be one of {RECIPES}, got {self.recipe!r}")
        if self.instance_replicates < 1 or self.run_replicates < 1:
            raise ValidationError("replicate counts must be >= 1")
        for p in self.p_values:
            if not 0 < p <= 1:
                raise ValidationError(f"p must be in (0, 1], got {p}")


_SPEC_KEYS = {"source", "recipe", "p", "sigma", "instances", "runs", "seed",
              "n", "spacing", "record_time"}
_SOLVER_KEYS = {"alpha_start", "alpha_end", "alpha_rate", "q", "solves_per_alpha",
                "conv_tol", "cg_tol", "cg_max_iter", "theta", "pivots",
                "entropy_normalize", "threads"}


def parse_experiment_spec(text: str) -> ExperimentSpec:
    """Plain key-value lines, '#' comments; p and sigma accept comma lists."""
    values: dict = {}
    solver_values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ValidationError(f"spec line {lineno}: expected 'key value'")
        key, val = parts[0], parts[1].strip()
        if key in _SOLVER_KEYS:
            solver_values[key] = val
        elif key in _SPEC_KEYS:
            values[key] = val
        else:
            raise ValidationError(f"spec line {lineno}: unknown key {key!r}")

    def floats(s):
        return tuple(float(t) for t in s.split(","))

    kwargs: dict = {}
    if "source" in values:
        kwargs["source"] = values["source"]
    if "recipe" in values:
        kwargs["recipe"] = values["recipe"]
    if "p" in values:
        kwargs["p_values"] = floats(values["p"])
    if "sigma" in values:
        kwargs["sigma_values"] = floats(values["sigma"])
    if "instances" in values:
        kwargs["instance_replicates"] = int(values["instances"])
    if "runs" in values:
        kwargs["run_replicates"] = int(values["runs"])
    if "seed" in values:
        kwargs["seed"] = int(values["seed"])
    if "n" in values:
        kwargs["n"] = int(values["n"])
    if "spacing" in values:
        kwargs["spacing"] = float(values["spacing"])
    if "record_time" in values:
        kwargs["record_time"] = values["record_time"].lower() in ("1", "true", "yes")
    if solver_values:
        skw: dict = {}
        for key, val in solver_values.items():
            if key in ("solves_per_alpha", "cg_max_iter", "pivots", "threads"):
                skw[key] = int(val)
            elif key == "entropy_normalize":
                skw[key] = val.lower() in ("1", "true", "yes")
            elif key == "q":
                skw[key] = None if val.lower() == "auto" else float(val)
            else:
                skw[key] = float(val)
        kwargs["solver"] = SolverConfig(**skw)
    return ExperimentSpec(**kwargs)


@dataclass(frozen=True)
class ReportRow:
    p: float
    sigma: float
    instance: int
    run: int
    seed: int
    rmsd_A: float
    ldme: float
    violations: int
    time_s: float
    error: str = ""


@dataclass(frozen=True)
class Report:
    rows: tuple

    def cells(self) -> list[tuple[float, float]]:
        seen: list[tuple[float, float]] = []
        for r in self.rows:
            key = (r.p, r.sigma)
            if key not in seen:
                seen.append(key)
        return seen

    def aggregate(self) -> list[dict]:
        """Per-cell means and population standard deviations."""
        out = []
        for p, sigma in self.cells():
            rows = [r for r in self.rows if (r.p, r.sigma) == (p, sigma)]
            good = [r for r in rows if not r.error and np.isfinite(r.rmsd_A)]
            entry = {"p": p, "sigma": sigma, "rows": len(rows), "failed": len(rows) - len(good)}
            for name in ("rmsd_A", "ldme", "time_s"):
                vals = np.array([getattr(r, name) for r in good])
                entry[f"mean_{name}"] = float(vals.mean()) if len(vals) else float("nan")
                entry[f"std_{name}"] = float(vals.std()) if len(vals) else float("nan")
            out.append(entry)
        return out


def _load_atoms(spec: ExperimentSpec):
    if spec.source == "synthetic":
        return synthetic_chain(spec.n, spec.spacing, seed=spec.seed)
    with open(spec.source, "r", encoding="utf-8") as fh:
        return parse_pdb_atoms(fh.read())


def _generate(atoms, recipe: str, p: float, sigma: float, seed: int) -> Instance:
    if recipe == "normal":
        return gen_normal_instance(atoms, p, sigma, seed)
    if recipe == "bonds":
        return gen_bonds_instance(atoms, p, sigma, seed)
    return gen_weighted_instance(atoms, p, seed)


def _run_row(args) -> ReportRow:
    inst, p, sigma, i, j, run_seed, cfg, record_time = args
    try:
        t0 = time.perf_counter()
        coords, _ = reconstruct(inst, replace(cfg, seed=run_seed))
        elapsed = time.perf_counter() - t0
        stats = violation_stats(coords, inst)
        value = rmsd(coords, inst.reference) if inst.reference is not None else float("nan")
        return ReportRow(p, sigma, i, j, run_seed, value, ldme(coords, inst),
                         stats.count, elapsed if record_time else 0.0)
    except Exception as exc:  # row failures must not abort the batch
        return ReportRow(p, sigma, i, j, run_seed, float("nan"), float("nan"),
                         -1, 0.0, f"{type(exc).__name__}: {exc}")


def run_experiment(spec: ExperimentSpec) -> Report:
    atoms = _load_atoms(spec)
    if atoms.n == 0:
        raise ValidationError(f"input source {spec.source!r} produced no atoms")
    tasks = []
    for p in spec.p_values:
        for sigma in spec.sigma_values:
            for i in range(spec.instance_replicates):
                inst_seed = spec.seed + 1000 * i
                inst = _generate(atoms, spec.recipe, p, sigma, inst_seed)
                for j in range(1, spec.run_replicates + 1):
                    run_seed = spec.seed + 1000 * i + j
                    tasks.append((inst, p, sigma, i, j, run_seed, spec.solver,
                                  spec.record_time))
    if spec.solver.threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.solver.threads) as ex:
            rows = list(ex.map(_run_row, tasks))
    else:
        rows = [_run_row(t) for t in tasks]
    return Report(tuple(rows))


ROW_COLUMNS = ("instance", "run", "seed", "rmsd_A", "ldme", "violations",
               "time_s", "p", "sigma", "error")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: Report, fmt: str = "csv", out_dir: str = ".") -> list[str]:
    """Write rows, aggregate and plot-data files; returns the paths."""
    if fmt not in ("csv", "tsv", "json"):
        raise ValidationError(f"format must be csv, tsv or json, got {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    agg = report.aggregate()
    agg_columns = (["p", "sigma", "rows", "failed"]
                   + [f"{s}_{n}" for n in ("rmsd_A", "ldme", "time_s")
                      for s in ("mean", "std")])
    plot_rows = [{"p": a["p"], "sigma": a["sigma"], "mean_rmsd_A": a["mean_rmsd_A"]}
                 for a in agg]
    paths = []
    if fmt == "json":
        payloads = {
            "rows.json": [dict(zip(ROW_COLUMNS, _row_values(r))) for r in report.rows],
            "aggregate.json": agg,
            "plotdata.json": plot_rows,
        }
        for name, payload in payloads.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            paths.append(path)
        return paths
    sep = "," if fmt == "csv" else "\t"
    tables = {
        f"rows.{fmt}": ([*ROW_COLUMNS], [_row_values(r) for r in report.rows]),
        f"aggregate.{fmt}": (agg_columns, [[a[c] for c in agg_columns] for a in agg]),
        f"plotdata.{fmt}": (["p", "sigma", "mean_rmsd_A"],
                            [[r["p"], r["sigma"], r["mean_rmsd_A"]] for r in plot_rows]),
    }
    for name, (columns, rows) in tables.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(sep.join(columns) + "\n")
            for row in rows:
                fh.write(sep.join(_fmt(v) for v in row) + "\n")
        paths.append(path)
    return paths


def _row_values(r: ReportRow) -> list:
    return [r.instance, r.run, r.seed, r.rmsd_A, r.ldme, r.violations,
            r.time_s, r.p, r.sigma, r.error]
