"""Local refiners run after the maxent-stress solve.

Two passes: a low-temperature simulated annealing over edges with a
spring-force move, and a greedy pass that snaps violating edges exactly
onto their nearest interval bound. The combined workflow keeps whichever
of {input, annealed, greedy-refined} scores the lowest LDME, so
refinement can never make the result worse.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Instance, ValidationError
from .metrics import (VIOLATION_THRESHOLD, interval_errors, ldme,
                      weighted_total_error)
from .linalg import pair_jitter


@dataclass(frozen=True)
class SAConfig:
    """Annealing constants; caps scale with the edge count m.

    stall_limit of None means m (non-improving steps allowed before the
    outer loop gives up).
    """

    t_start: float = 0.3
    cooling: float = 0.1
    t_min: float = 1e-7
    stall_limit: Optional[int] = None
    iter_cap_factor: float = 2.0
    modification_cap_factor: float = 0.5
    step_cap_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.cooling < 1):
            raise ValidationError("need 0 < cooling < 1")
        if not (0 < self.t_min < self.t_start):
            raise ValidationError("need 0 < t_min < t_start")


def _incident_union(inst: Instance, e: int) -> np.ndarray:
    g = inst.graph
    v, w = g.edges[e]
    return np.union1d(g.incident_edges[v], g.incident_edges[w])


def local_error(e: int, x: np.ndarray, inst: Instance) -> float:
    """Weighted error of edge e plus all other edges at its endpoints."""
    idxs = _incident_union(inst, e)
    return _local_error_idxs(idxs, x, inst)


def _local_error_idxs(idxs: np.ndarray, x: np.ndarray, inst: Instance) -> float:
    edges = inst.graph.edges[idxs]
    diff = x[edges[:, 0]] - x[edges[:, 1]]
    lengths = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    dev = np.maximum(np.maximum(inst.lower[idxs] - lengths,
                                lengths - inst.upper[idxs]), 0.0)
    return float(np.dot(inst.weight[idxs], dev * dev))


def _spring_force(a: int, x: np.ndarray, inst: Instance) -> np.ndarray:
    """Force on vertex a from its violating incident edges only.

    Too-short edges push (repulsive, scaled l^2 / len^2), too-long edges
    pull (attractive, scaled u^2 / len^2).
    """
    g = inst.graph
    force = np.zeros(3)
    for idx in g.incident_edges[a]:
        ev, ew = g.edges[idx]
        b = int(ev + ew - a)
        diff = x[a] - x[b]
        length = float(np.linalg.norm(diff))
        lo, up = inst.lower[idx], inst.upper[idx]
        dev = max(lo - length, length - up, 0.0)
        if dev * dev <= VIOLATION_THRESHOLD:
            continue
        if length < 1e-9:
            diff = pair_jitter(a, b)
            length = 1e-9
        if length < lo:
            force += diff * (lo * lo) / (length * length)
        elif length > up:
            force -= diff * (up * up) / (length * length)
    return force


def local_force_step(v: int, w: int, x: np.ndarray, inst: Instance,
                     step_cap_fraction: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Proposed new positions for v and w; everything else stays fixed.

    The shared displacement scale caps the larger endpoint move at
    step_cap_fraction times the edge's upper bound, keeping the 1/r^2
    forces from overshooting near coincident points.
    """
    g = inst.graph
    e = _edge_index(g, v, w)
    fv = _spring_force(v, x, inst)
    fw = _spring_force(w, x, inst)
    fmax = max(float(np.linalg.norm(fv)), float(np.linalg.norm(fw)))
    cap = step_cap_fraction * float(inst.upper[e])
    scale = 1.0 if fmax <= cap or fmax == 0.0 else cap / fmax
    return x[v] + scale * fv, x[w] + scale * fw


def _edge_index(g, v: int, w: int) -> int:
    a, b = (v, w) if v < w else (w, v)
    for idx in g.incident_edges[a]:
        ev, ew = g.edges[idx]
        if ev == a and ew == b:
            return int(idx)
    raise ValidationError(f"({v}, {w}) is not an edge")


def sa_accept(t: float, old_err: float, new_err: float, rng) -> bool:
    """Always accept improvements; worse moves pass a Boltzmann draw."""
    if t <= 0:
        raise ValidationError("temperature must be positive")
    if new_err <= old_err:
        return True
    return bool(rng.random() < math.exp(-(new_err - old_err) / t))


def simulated_annealing(inst: Instance, emb: np.ndarray,
                        cfg: Optional[SAConfig] = None) -> np.ndarray:
    """Edge-wise annealing with the spring-force neighbor move.

    Per temperature level the edge sweep is bounded by the iteration and
    modification caps; the temperature cools geometrically and the outer
    loop stops on a stall (no total-error improvement for more than
    stall_limit steps) or once t drops below t_min. Deterministic for a
    fixed seed.
    """
    cfg = cfg or SAConfig()
    x = np.array(emb, dtype=np.float64)
    m = inst.m
    if m == 0:
        return x
    stall_limit = cfg.stall_limit if cfg.stall_limit is not None else m
    iter_cap = int(cfg.iter_cap_factor * m)
    mod_cap = cfg.modification_cap_factor * m
    rng = np.random.default_rng(cfg.seed)
    spheres = [_incident_union(inst, e) for e in range(m)]
    edges = inst.graph.edges

    # consecutive edge steps without a strict local improvement; any
    # improving accepted move resets it, so only a fully stalled sweep
    # (or a rock-bottom temperature) ends the outer loop
    no_improve_steps = 0
    t = cfg.t_start
    while True:
        iters = 0
        mods = 0
        while iters < iter_cap and mods < mod_cap:
            progressed = False
            for e in range(m):
                if iters >= iter_cap or mods >= mod_cap:
                    break
                iters += 1
                v, w = int(edges[e, 0]), int(edges[e, 1])
                old_local = _local_error_idxs(spheres[e], x, inst)
                saved_v, saved_w = x[v].copy(), x[w].copy()
                new_v, new_w = local_force_step(v, w, x, inst, cfg.step_cap_fraction)
                x[v], x[w] = new_v, new_w
                new_local = _local_error_idxs(spheres[e], x, inst)
                if sa_accept(t, old_local, new_local, rng):
                    if new_local < old_local:
                        no_improve_steps = 0
                    else:
                        no_improve_steps += 1
                    if not (np.array_equal(new_v, saved_v) and np.array_equal(new_w, saved_w)):
                        mods += 1
                        progressed = True
                else:
                    x[v], x[w] = saved_v, saved_w
                    no_improve_steps += 1
            if not progressed:
                break
        t *= cfg.cooling
        if no_improve_steps > stall_limit or t < cfg.t_min:
            break
    return x


def adjust_length(e: int, x: np.ndarray, inst: Instance) -> tuple[np.ndarray, np.ndarray]:
    """Snap edge e exactly onto its violated bound, midpoint fixed.

    Too-long edges shrink to the upper bound, too-short ones stretch to
    the lower bound; both endpoints move symmetrically along the edge
    axis. Coincident endpoints separate along a deterministic random
    axis to the lower bound.
    """
    v, w = (int(a) for a in inst.graph.edges[e])
    diff = x[v] - x[w]
    length = float(np.linalg.norm(diff))
    lo, up = float(inst.lower[e]), float(inst.upper[e])
    if length < 1e-12:
        axis = pair_jitter(v, w)
        target = lo
    else:
        axis = diff / length
        if length > up:
            target = up
        elif length < lo:
            target = lo
        else:
            target = length
    mid = (x[v] + x[w]) / 2.0
    half = 0.5 * target * axis
    return mid + half, mid - half


def simple_local_opt(inst: Instance, emb: np.ndarray, max_iter: int = 50,
                     stats: Optional[dict] = None) -> np.ndarray:
    """Greedy bound-snapping over violating edges, worst error first.

    A snap is kept only when it strictly lowers the edge's local error;
    the endpoints' other edges are then locked for the rest of the
    iteration to stop oscillation. Confidence-weighted instances order
    edges by confidence first, larger error breaking ties.
    """
    x = np.array(emb, dtype=np.float64)
    g = inst.graph
    if stats is not None:
        stats.update(iterations=0, accepted=0, rejected=0, accept_violations=0)
    for it in range(max_iter):
        if stats is not None:
            stats["iterations"] = it + 1
        errs = interval_errors(x, inst)
        violating = np.nonzero(errs > VIOLATION_THRESHOLD)[0]
        if len(violating) == 0:
            break
        if inst.weighted:
            order = violating[np.lexsort(
                (violating, -errs[violating], -inst.confidence[violating]))]
        else:
            order = violating[np.lexsort((violating, -errs[violating]))]
        locked_vertex = np.zeros(g.n, dtype=bool)
        improved = False
        for e in order:
            v, w = int(g.edges[e, 0]), int(g.edges[e, 1])
            if locked_vertex[v] or locked_vertex[w]:
                continue
            before = local_error(e, x, inst)
            saved_v, saved_w = x[v].copy(), x[w].copy()
            x[v], x[w] = adjust_length(e, x, inst)
            after = local_error(e, x, inst)
            if after < before:
                locked_vertex[v] = locked_vertex[w] = True
                improved = True
                if stats is not None:
                    stats["accepted"] += 1
                    # recompute from the committed coordinates; catches aliasing
                    if local_error(e, x, inst) >= before:
                        stats["accept_violations"] += 1
            else:
                x[v], x[w] = saved_v, saved_w
                if stats is not None:
                    stats["rejected"] += 1
        if not improved:
            break
    return x


def refine_workflow(inst: Instance, emb: np.ndarray,
                    sa_cfg: Optional[SAConfig] = None,
                    max_iter: int = 50) -> np.ndarray:
    """SA, then greedy snapping, keeping the best of all three stages.

    An annealing result that scores worse than its input is discarded
    before the greedy pass, and the final answer is whichever candidate
    has the lowest LDME, so the workflow never degrades its input.
    """
    base = np.array(emb, dtype=np.float64)
    if inst.m == 0:
        return base
    ldme_in = ldme(base, inst)
    annealed = simulated_annealing(inst, base, sa_cfg)
    survivor = annealed if ldme(annealed, inst) <= ldme_in else base
    final = simple_local_opt(inst, survivor, max_iter=max_iter)
    best = base
    best_score = ldme_in
    for cand in (survivor, final):
        score = ldme(cand, inst)
        if score <= best_score:
            best, best_score = cand, score
    return best
