"""Weighted Laplacians, conjugate-gradient solves, and octree entropy forces.

The Laplacian of a graph is singular (constant vectors per connected
component); solves project the right-hand side and the solution onto the
orthogonal complement of each component's constant vector instead of
pinning a vertex, which would bias the embedding.

The entropy force on a vertex v is

    sgn(q) * sum over other points u of (x_v - x_u) / ||x_v - x_u||^(q+2)

(repulsive for q >= 0, with sgn(0) = 1), approximated Barnes-Hut style:
a cell far enough away, side / distance < theta, acts as `count` copies
of its centroid. theta = 0 reproduces the exact pairwise sum.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix, coo_matrix, diags
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg as _scipy_cg

from .core import Graph, SolverConfig, ValidationError

COINCIDENT_EPS = 1e-12
JITTER_MAGNITUDE = 1e-3
_MAX_OCTREE_DEPTH = 48


@dataclass(frozen=True)
class LaplacianSystem:
    """Weighted graph Laplacian with its connected-component structure."""

    n: int
    matrix: csr_matrix
    comp_labels: np.ndarray
    n_components: int


def assemble_laplacian(g: Graph, w: np.ndarray) -> LaplacianSystem:
    """L_vu = -w_vu on edges, L_vv = sum of incident weights."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (g.m,):
        raise ValidationError(f"need one weight per edge ({g.m}), got {w.shape}")
    if g.m and w.min() <= 0:
        raise ValidationError("edge weights must be positive")
    v, u = g.edges[:, 0], g.edges[:, 1]
    deg = np.zeros(g.n)
    np.add.at(deg, v, w)
    np.add.at(deg, u, w)
    rows = np.concatenate([v, u, np.arange(g.n)])
    cols = np.concatenate([u, v, np.arange(g.n)])
    vals = np.concatenate([-w, -w, deg])
    mat = coo_matrix((vals, (rows, cols)), shape=(g.n, g.n)).tocsr()
    if g.m:
        labels = connected_components(mat, directed=False)[1]
        ncomp = int(labels.max()) + 1
    else:
        labels = np.arange(g.n)
        ncomp = g.n
    return LaplacianSystem(g.n, mat, labels, ncomp)


def project_components(vec: np.ndarray, system: LaplacianSystem) -> np.ndarray:
    """Subtract the per-component mean, removing the nullspace part."""
    sums = np.bincount(system.comp_labels, weights=vec, minlength=system.n_components)
    counts = np.bincount(system.comp_labels, minlength=system.n_components)
    return vec - (sums / counts)[system.comp_labels]


@dataclass(frozen=True)
class CGReport:
    iterations: int
    residual: float
    converged: bool


def solve_cg(system: LaplacianSystem, b: np.ndarray,
             cfg: Optional[SolverConfig] = None,
             guess: Optional[np.ndarray] = None) -> tuple[np.ndarray, CGReport]:
    """Solve L x = b in the component-orthogonal subspace.

    The rhs is projected internally; the solution comes back mean-centered
    per component. Convergence is ||r|| <= cg_tol * ||b||, Jacobi
    preconditioned.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (system.n,):
        raise ValidationError(f"rhs must have length {system.n}, got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValidationError("rhs contains non-finite entries")
    bt = project_components(b, system)
    bnorm = float(np.linalg.norm(bt))
    if bnorm == 0.0:
        return np.zeros(system.n), CGReport(0, 0.0, True)
    x0 = None
    if guess is not None:
        x0 = project_components(np.asarray(guess, dtype=np.float64), system)
    d = system.matrix.diagonal()
    precond = diags(1.0 / np.where(d > 0, d, 1.0))
    iters = 0

    def _count(_):
        nonlocal iters
        iters += 1

    x, info = _scipy_cg(system.matrix, bt, x0=x0, rtol=cfg.cg_tol, atol=0.0,
                        maxiter=cfg.cg_max_iter, M=precond, callback=_count)
    x = project_components(x, system)
    residual = float(np.linalg.norm(system.matrix @ x - bt))
    return x, CGReport(iters, residual, info == 0)


# The multigrid slot of the original design is a registry with CG as the
# only built-in backend; external solvers can register under a new name.
LINEAR_SOLVERS = {"cg": solve_cg}


def linear_solve(system, b, cfg=None, guess=None):
    cfg = cfg or SolverConfig()
    try:
        backend = LINEAR_SOLVERS[cfg.linear_solver]
    except KeyError:
        raise ValidationError(f"unknown linear solver '{cfg.linear_solver}'") from None
    return backend(system, b, cfg, guess)


def pair_jitter(v: int, u: int) -> np.ndarray:
    """Deterministic random unit vector for a coincident pair.

    Antisymmetric in (v, u) so the pair forces cancel in global sums,
    exactly like the regular pairwise term.
    """
    a, b = (v, u) if v < u else (u, v)
    vec = np.random.default_rng([a, b]).normal(size=3)
    vec /= np.linalg.norm(vec)
    return vec if v < u else -vec


class Octree:
    """Axis-aligned cubic cells over a point set, leaf capacity 1.

    Coincident points end up sharing a leaf at the depth cap. Stored as
    flat arrays (children index -1 = absent, leaf_start -1 = internal)
    so traversal can run vectorized over many query points at once.
    """

    __slots__ = ("points", "center", "side", "count", "centroid",
                 "children", "leaf_start", "leaf_count", "leaf_points")

    def __init__(self, points, center, side, count, centroid, children,
                 leaf_start, leaf_count, leaf_points):
        self.points = points
        self.center = center
        self.side = side
        self.count = count
        self.centroid = centroid
        self.children = children
        self.leaf_start = leaf_start
        self.leaf_count = leaf_count
        self.leaf_points = leaf_points

    @property
    def n_nodes(self) -> int:
        return len(self.side)

    def is_leaf(self, k: int) -> bool:
        return self.leaf_start[k] >= 0

    def leaf_indices(self, k: int) -> np.ndarray:
        s = self.leaf_start[k]
        return self.leaf_points[s:s + self.leaf_count[k]]


def build_octree(points: np.ndarray) -> Octree:
    """Top-down recursive build over the bounding cube of the points."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    if len(pts) < 1:
        raise ValidationError("octree needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("octree points must be finite")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    root_center = (lo + hi) / 2.0
    root_side = float((hi - lo).max())
    if root_side == 0.0:
        root_side = 1.0
    root_side *= 1.0 + 1e-9

    centers, sides, counts, centroids = [], [], [], []
    children, leaf_start, leaf_count = [], [], []
    leaf_points: list[int] = []

    def rec(idx: np.ndarray, center: np.ndarray, side: float, depth: int) -> int:
        k = len(sides)
        centers.append(center)
        sides.append(side)
        counts.append(len(idx))
        centroids.append(pts[idx].mean(axis=0))
        children.append([-1] * 8)
        leaf_start.append(-1)
        leaf_count.append(0)
        if len(idx) <= 1 or depth >= _MAX_OCTREE_DEPTH:
            leaf_start[k] = len(leaf_points)
            leaf_count[k] = len(idx)
            leaf_points.extend(int(i) for i in idx)
            return k
        octant = ((pts[idx, 0] >= center[0]).astype(np.int8)
                  + 2 * (pts[idx, 1] >= center[1]).astype(np.int8)
                  + 4 * (pts[idx, 2] >= center[2]).astype(np.int8))
        quarter = side / 4.0
        for o in range(8):
            sub = idx[octant == o]
            if len(sub) == 0:
                continue
            offset = np.array([(1 if o & 1 else -1), (1 if o & 2 else -1),
                               (1 if o & 4 else -1)], dtype=np.float64) * quarter
            children[k][o] = rec(sub, center + offset, side / 2.0, depth + 1)
        return k

    rec(np.arange(len(pts)), root_center, root_side, 0)
    return Octree(pts, np.array(centers), np.array(sides), np.array(counts, dtype=np.int64),
                  np.array(centroids), np.array(children, dtype=np.int64),
                  np.array(leaf_start, dtype=np.int64), np.array(leaf_count, dtype=np.int64),
                  np.array(leaf_points, dtype=np.int64))


def _sgn(q: float) -> float:
    return -1.0 if q < 0 else 1.0


def entropy_force(tree: Octree, v: int, x: np.ndarray, q: float, theta: float) -> np.ndarray:
    """Approximate entropy force on vertex v from all other tree points."""
    if q <= -2:
        raise ValidationError("entropy exponent q must be > -2")
    sgn = _sgn(q)
    expo = q + 2.0
    xv = np.asarray(x, dtype=np.float64)[v]
    force = np.zeros(3)
    stack = [0]
    while stack:
        k = stack.pop()
        if tree.is_leaf(k):
            for u in tree.leaf_indices(k):
                if u == v:
                    continue
                diff = xv - tree.points[u]
                dist = float(np.linalg.norm(diff))
                if dist < COINCIDENT_EPS:
                    force += JITTER_MAGNITUDE * pair_jitter(v, int(u))
                else:
                    force += sgn * diff / dist ** expo
            continue
        diff = xv - tree.centroid[k]
        dist = float(np.linalg.norm(diff))
        half = tree.side[k] / 2.0 + 1e-12
        inside = bool(np.all(np.abs(xv - tree.center[k]) <= half))
        if dist > 0.0 and tree.side[k] / dist < theta and not inside:
            force += tree.count[k] * sgn * diff / dist ** expo
        else:
            stack.extend(c for c in tree.children[k] if c >= 0)
    return force


def entropy_forces(tree: Octree, x: np.ndarray, q: float, theta: float) -> np.ndarray:
    """Entropy force for every point at once (vectorized traversal).

    Equivalent to calling entropy_force per vertex, but nodes are visited
    once each with the set of query points still active there.
    """
    if q <= -2:
        raise ValidationError("entropy exponent q must be > -2")
    pts = np.asarray(x, dtype=np.float64)
    n = len(pts)
    sgn = _sgn(q)
    expo = q + 2.0
    forces = np.zeros((n, 3))
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
    while stack:
        k, active = stack.pop()
        if tree.is_leaf(k):
            for u in tree.leaf_indices(k):
                diff = pts[active] - tree.points[u]
                dist = np.linalg.norm(diff, axis=1)
                near = dist < COINCIDENT_EPS
                far = ~near
                forces[active[far]] += sgn * diff[far] / dist[far, None] ** expo
                for a in active[near]:
                    if a != u:
                        forces[a] += JITTER_MAGNITUDE * pair_jitter(int(a), int(u))
            continue
        diff = pts[active] - tree.centroid[k]
        dist = np.linalg.norm(diff, axis=1)
        half = tree.side[k] / 2.0 + 1e-12
        inside = np.all(np.abs(pts[active] - tree.center[k]) <= half, axis=1)
        ratio = np.full_like(dist, np.inf)
        np.divide(tree.side[k], dist, out=ratio, where=dist > 0)
        ok = ~inside & (ratio < theta)
        if ok.any():
            forces[active[ok]] += (tree.count[k] * sgn) * diff[ok] / dist[ok, None] ** expo
        rest = active[~ok]
        if len(rest):
            for c in tree.children[k]:
                if c >= 0:
                    stack.append((c, rest))
    return forces


def neighbor_entropy_terms(g: Graph, x: np.ndarray, q: float) -> np.ndarray:
    """Per-vertex sum of entropy-force terms over graph neighbors.

    Subtracting this from the all-points tree sum leaves the sum over
    non-neighbor pairs, which is what the maxent objective wants.
    """
    sgn = _sgn(q)
    expo = q + 2.0
    out = np.zeros((g.n, 3))
    if g.m == 0:
        return out
    v, u = g.edges[:, 0], g.edges[:, 1]
    diff = x[v] - x[u]
    dist = np.linalg.norm(diff, axis=1)
    near = dist < COINCIDENT_EPS
    term = np.zeros_like(diff)
    far = ~near
    term[far] = sgn * diff[far] / dist[far, None] ** expo
    for e in np.nonzero(near)[0]:
        term[e] = JITTER_MAGNITUDE * pair_jitter(int(v[e]), int(u[e]))
    np.add.at(out, v, term)
    np.add.at(out, u, -term)
    return out
