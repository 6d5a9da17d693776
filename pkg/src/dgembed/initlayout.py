"""Initial embeddings: random cube, neighbor spheres, and pivot MDS.

Pivot MDS is the default in the reconstruction pipeline; it scales the
classical MDS double-centering trick down to an n x pivots matrix built
from weighted shortest-path distances.
"""

from collections import deque
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .core import Graph, ValidationError

DEFAULT_PIVOTS = 250


def layout_random_cube(n: int, side: float, seed: int) -> np.ndarray:
    """Uniform points in the axis-aligned cube [0, side]^3."""
    if side <= 0:
        raise ValidationError(f"cube side must be positive, got {side}")
    return np.random.default_rng(seed).uniform(0.0, side, size=(n, 3))


def layout_hypersphere(g: Graph, d: np.ndarray, seed: int) -> np.ndarray:
    """BFS placement: each new vertex lands on a sphere around its parent.

    The traversal of each component starts at its highest-degree vertex
    (lowest id on ties) and places every newly discovered vertex w at
    exactly distance d_vw from the vertex v that discovered it, in a
    uniformly random direction.
    """
    rng = np.random.default_rng(seed)
    x = np.zeros((g.n, 3))
    placed = np.zeros(g.n, dtype=bool)
    order = np.lexsort((np.arange(g.n), -g.degrees))
    for start in order:
        if placed[start]:
            continue
        placed[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for idx in g.incident_edges[v]:
                a, b = g.edges[idx]
                w = int(a + b - v)
                if placed[w]:
                    continue
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                x[w] = x[v] + d[idx] * direction
                placed[w] = True
                queue.append(w)
    return x


def _edge_weight_matrix(g: Graph, d: np.ndarray):
    v, u = g.edges[:, 0], g.edges[:, 1]
    w = np.asarray(d, dtype=np.float64)
    return coo_matrix((np.concatenate([w, w]),
                       (np.concatenate([v, u]), np.concatenate([u, v]))),
                      shape=(g.n, g.n)).tocsr()


def layout_pivot_mds(g: Graph, d: np.ndarray, pivots: Optional[int] = None,
                     seed: int = 0) -> np.ndarray:
    """Approximate MDS from shortest-path distances to sampled pivots.

    Pivots are chosen by max-min sampling (first one random by seed).
    The squared pivot-distance matrix is double-centered and the top
    three singular directions, scaled by sqrt of the singular values,
    give the coordinates; with pivots = n this is exactly classical MDS.
    """
    if pivots is None:
        pivots = min(g.n, DEFAULT_PIVOTS)
    if pivots > g.n:
        raise ValidationError(f"cannot pick {pivots} pivots from {g.n} vertices")
    if pivots < 3:
        raise ValidationError("pivot MDS needs at least 3 pivots")
    graph = _edge_weight_matrix(g, d)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(g.n))
    chosen = [first]
    rows = [dijkstra(graph, directed=False, indices=first)]
    min_dist = rows[0].copy()
    while len(chosen) < pivots:
        min_dist[chosen] = -np.inf
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        row = dijkstra(graph, directed=False, indices=nxt)
        rows.append(row)
        min_dist = np.minimum(min_dist, row)
    dist = np.array(rows).T  # (n, pivots)
    finite = np.isfinite(dist)
    if not finite.all():
        # disconnected pairs: park the components apart instead of at infinity
        fill = 1.5 * dist[finite].max() if finite.any() else 1.0
        dist = np.where(finite, dist, fill)
    sq = dist ** 2
    c = -0.5 * (sq - sq.mean(axis=1, keepdims=True)
                - sq.mean(axis=0, keepdims=True) + sq.mean())
    u, s, _ = np.linalg.svd(c, full_matrices=False)
    return u[:, :3] * np.sqrt(s[:3])
