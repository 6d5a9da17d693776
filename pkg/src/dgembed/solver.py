"""Maxent-stress iteration: Laplacian solves with entropy-augmented rhs.

Each step solves L_w x = b per coordinate axis, with

    b_v = sum over neighbors u of w_vu * d_vu * unit(x_v - x_u)
          + alpha * entropy_v,

all taken at the previous iterate. The alpha schedule shrinks the
entropy influence geometrically (1, 0.3, 0.09, 0.027, 0.0081 by
default); within one alpha level up to `solves_per_alpha` steps run,
stopping early once the relative change between successive solutions
drops below `conv_tol`.

The entropy cache is refreshed lazily: only at iterations i where
floor(5 * log i) changes, which front-loads recomputation where the
layout still moves a lot.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (Graph, Instance, SolverConfig, ValidationError,
                   check_embedding, midpoint_distances)
from .linalg import (COINCIDENT_EPS, LaplacianSystem, assemble_laplacian,
                     build_octree, entropy_forces, linear_solve,
                     neighbor_entropy_terms, pair_jitter)


class SolveDivergence(RuntimeError):
    """Iterate became non-finite; carries the trace collected so far."""

    def __init__(self, message: str, trace: "SolveTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolveTrace:
    """Per-iteration observability of the alpha schedule."""

    alpha: np.ndarray
    rel_change: np.ndarray
    stress: np.ndarray
    entropy_recomputed: np.ndarray
    q: float

    @property
    def iterations(self) -> int:
        return len(self.alpha)


def lazy_entropy_due(i: int, base: float = math.e) -> bool:
    """True when the entropy cache should be refreshed at iteration i >= 1."""
    if i < 1:
        raise ValidationError("iteration index starts at 1")
    if i == 1:
        return True
    scale = 5.0 / math.log(base)
    return math.floor(scale * math.log(i)) != math.floor(scale * math.log(i - 1))


def stress_value(x: np.ndarray, g: Graph, d: np.ndarray, w: np.ndarray) -> float:
    """Weighted quadratic stress sum w_e * (||x_v - x_w|| - d_e)^2."""
    diff = x[g.edges[:, 0]] - x[g.edges[:, 1]]
    lengths = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return float(np.dot(w, (lengths - d) ** 2))


def _direction_terms(g: Graph, x: np.ndarray) -> np.ndarray:
    """Unit vectors x_v - x_u per edge, jittered for coincident pairs."""
    v, u = g.edges[:, 0], g.edges[:, 1]
    diff = x[v] - x[u]
    dist = np.linalg.norm(diff, axis=1)
    near = dist < COINCIDENT_EPS
    unit = np.zeros_like(diff)
    far = ~near
    unit[far] = diff[far] / dist[far, None]
    for e in np.nonzero(near)[0]:
        unit[e] = pair_jitter(int(v[e]), int(u[e]))
    return unit


def maxent_step(g: Graph, d: np.ndarray, w: np.ndarray, x_prev: np.ndarray,
                alpha: float, q: float, entropy: np.ndarray,
                system: Optional[LaplacianSystem] = None,
                cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """One majorization step; returns the mean-centered new embedding."""
    if q <= -2:
        raise ValidationError("entropy exponent q must be > -2")
    cfg = cfg or SolverConfig()
    x_prev = check_embedding(x_prev, g.n)
    entropy = np.asarray(entropy, dtype=np.float64)
    if entropy.shape != (g.n, 3):
        raise ValidationError(f"entropy cache must be ({g.n}, 3), got {entropy.shape}")
    if system is None:
        system = assemble_laplacian(g, w)
    unit = _direction_terms(g, x_prev)
    b = np.zeros((g.n, 3))
    contrib = (w * d)[:, None] * unit
    np.add.at(b, g.edges[:, 0], contrib)
    np.add.at(b, g.edges[:, 1], -contrib)
    b += alpha * entropy
    out = np.empty_like(x_prev)
    for ax in range(3):
        out[:, ax], _ = linear_solve(system, b[:, ax], cfg, guess=x_prev[:, ax])
    return out


def _entropy_cache(g: Graph, x: np.ndarray, q: float, theta: float,
                   normalize: bool, non_neighbors: np.ndarray) -> np.ndarray:
    tree = build_octree(x)
    f = entropy_forces(tree, x, q, theta)
    f -= neighbor_entropy_terms(g, x, q)
    f[non_neighbors == 0] = 0.0
    if normalize:
        active = non_neighbors > 0
        f[active] /= non_neighbors[active, None]
    return f


def choose_q(g: Graph) -> float:
    """0.8 when more than 30% of vertices have degree 1, else 0."""
    if g.n == 0:
        return 0.0
    return 0.8 if np.mean(g.degrees == 1) > 0.3 else 0.0


def default_stress_weights(inst: Instance) -> np.ndarray:
    """1 / d'^2 majorization weights, scaled by the per-edge penalty weight."""
    d = midpoint_distances(inst)
    return inst.weight / np.maximum(d, 1e-6) ** 2


def maxent_solve(inst: Instance, cfg: Optional[SolverConfig] = None,
                 init: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveTrace]:
    """Run the full alpha schedule on an instance from a given layout."""
    cfg = cfg or SolverConfig()
    g = inst.graph
    if init is None:
        raise ValidationError("maxent_solve needs an initial embedding")
    x = check_embedding(init, g.n).copy()
    x -= x.mean(axis=0)
    d = midpoint_distances(inst)
    w = default_stress_weights(inst)
    q = cfg.q if cfg.q is not None else choose_q(g)
    system = assemble_laplacian(g, w)
    non_neighbors = (g.n - 1) - g.degrees
    entropy_active = bool(np.any(non_neighbors > 0)) and g.n > 1
    entropy = np.zeros((g.n, 3))

    alphas, rels, stresses, recomputed = [], [], [], []
    i_global = 0
    single_step_streak = 0
    for alpha in cfg.alphas():
        inner = 0
        converged_in_one = False
        for _ in range(cfg.solves_per_alpha):
            i_global += 1
            inner += 1
            due = entropy_active and lazy_entropy_due(i_global, cfg.lazy_log_base)
            if due:
                entropy = _entropy_cache(g, x, q, cfg.theta,
                                         cfg.entropy_normalize, non_neighbors)
            x_new = maxent_step(g, d, w, x, alpha, q, entropy, system=system, cfg=cfg)
            if not np.all(np.isfinite(x_new)):
                trace = _freeze_trace(alphas, rels, stresses, recomputed, q)
                raise SolveDivergence(
                    f"non-finite iterate at iteration {i_global} (alpha={alpha})", trace)
            denom = max(float(np.linalg.norm(x)), 1e-30)
            rel = float(np.linalg.norm(x_new - x)) / denom
            alphas.append(alpha)
            rels.append(rel)
            stresses.append(stress_value(x_new, g, d, w))
            recomputed.append(due)
            x = x_new
            if rel < cfg.conv_tol:
                converged_in_one = inner == 1
                break
        single_step_streak = single_step_streak + 1 if converged_in_one else 0
        if cfg.early_alpha_exit and single_step_streak >= 2:
            break
    return x, _freeze_trace(alphas, rels, stresses, recomputed, q)


def _freeze_trace(alphas, rels, stresses, recomputed, q) -> SolveTrace:
    return SolveTrace(np.array(alphas), np.array(rels), np.array(stresses),
                      np.array(recomputed, dtype=bool), float(q))
