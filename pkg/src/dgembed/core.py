"""Domain types for interval distance geometry instances.

A problem instance couples an undirected graph over atoms with one
distance interval per edge. Embeddings are plain (n, 3) float arrays of
Angstrom coordinates; no wrapper class. All types are immutable after
construction and safe to share across threads.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a structural precondition."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Graph:
    """Undirected simple graph with canonical edge ordering.

    Edges are stored as an (m, 2) int array with v < w per row, sorted
    lexicographically, so every per-edge array in the package is indexed
    the same way and runs are reproducible.
    """

    __slots__ = ("n", "edges", "neighbors", "incident_edges", "degrees", "m")

    def __init__(self, n: int, edges: np.ndarray):
        self.n = int(n)
        self.edges = _freeze(np.asarray(edges, dtype=np.int64).reshape(-1, 2))
        self.m = self.edges.shape[0]
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for idx, (v, w) in enumerate(self.edges):
            nbrs[v].append(w)
            nbrs[w].append(v)
            inc[v].append(idx)
            inc[w].append(idx)
        self.neighbors = tuple(_freeze(np.array(a, dtype=np.int64)) for a in nbrs)
        self.incident_edges = tuple(_freeze(np.array(a, dtype=np.int64)) for a in inc)
        self.degrees = _freeze(np.array([len(a) for a in nbrs], dtype=np.int64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges.shape == other.edges.shape \
            and bool(np.array_equal(self.edges, other.edges))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


def build_graph(n: int, edge_list) -> Graph:
    """Build a normalized graph from an iterable of vertex pairs.

    Self-loops and out-of-range ids are rejected; duplicate edges (in
    either orientation) are merged. The result is independent of the
    input ordering.
    """
    if n < 0:
        raise ValidationError(f"vertex count must be >= 0, got {n}")
    pairs = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if pairs.size:
        if pairs.min() < 0 or pairs.max() >= n:
            bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
            raise ValidationError(f"edge {tuple(bad)} references a vertex outside [0, {n})")
        loops = pairs[:, 0] == pairs[:, 1]
        if loops.any():
            raise ValidationError(f"self-loop at vertex {pairs[loops][0, 0]} is not allowed")
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        pairs = np.unique(np.column_stack([lo, hi]), axis=0)
    return Graph(n, pairs)


@dataclass(frozen=True)
class DistanceConstraint:
    """Interval bound for one edge, in Angstrom.

    `confidence` expresses how certain the interval is (1 = certain) and
    `weight` is the error-penalty factor derived from it; both default
    to 1 for plain interval instances.
    """

    lower: float
    upper: float
    confidence: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValidationError("constraint bounds must be finite")
        if self.lower < 0 or self.lower > self.upper:
            raise ValidationError(
                f"need 0 <= lower <= upper, got [{self.lower}, {self.upper}]")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if self.weight <= 0:
            raise ValidationError(f"weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class Instance:
    """Graph plus one distance constraint per edge.

    Per-edge data lives in parallel arrays indexed by the graph's
    canonical edge order. `reference` optionally holds the ground-truth
    coordinates the instance was generated from.
    """

    graph: Graph
    lower: np.ndarray
    upper: np.ndarray
    confidence: np.ndarray
    weight: np.ndarray
    reference: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.graph.m
        for name in ("lower", "upper", "confidence", "weight"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.shape != (m,):
                raise ValidationError(f"{name} must have one entry per edge ({m}), got {arr.shape}")
            object.__setattr__(self, name, _freeze(arr))
        if self.reference is not None:
            ref = np.ascontiguousarray(np.asarray(self.reference, dtype=np.float64))
            if ref.shape != (self.graph.n, 3):
                raise ValidationError(
                    f"reference must be ({self.graph.n}, 3), got {ref.shape}")
            object.__setattr__(self, "reference", _freeze(ref))

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m

    def constraint(self, e: int) -> DistanceConstraint:
        """Per-edge view of the parallel arrays."""
        return DistanceConstraint(
            float(self.lower[e]), float(self.upper[e]),
            float(self.confidence[e]), float(self.weight[e]))

    @property
    def weighted(self) -> bool:
        """True when any edge carries a non-trivial confidence."""
        return bool(np.any(self.confidence < 1.0))


def make_instance(graph: Graph, lower, upper, confidence=None, weight=None,
                  reference=None, meta=None) -> Instance:
    """Assemble an Instance, filling confidence/weight defaults of 1."""
    m = graph.m
    if confidence is None:
        confidence = np.ones(m)
    if weight is None:
        weight = np.ones(m)
    return Instance(graph, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
                    np.asarray(confidence, dtype=float), np.asarray(weight, dtype=float),
                    reference=reference, meta=dict(meta or {}))


@dataclass(frozen=True)
class SolverConfig:
    """Tunables for the maxent-stress solve.

    The alpha schedule runs alpha_start, alpha_start*alpha_rate, ... and
    stops before dropping below alpha_end. `q` of None selects the
    automatic rule (0, or 0.8 when more than 30% of vertices have
    degree 1). `threads` of 1 guarantees a deterministic run.
    """

    alpha_start: float = 1.0
    alpha_end: float = 0.008
    alpha_rate: float = 0.3
    q: Optional[float] = None
    solves_per_alpha: int = 50
    conv_tol: float = 1e-3
    cg_tol: float = 1e-8
    cg_max_iter: int = 1000
    theta: float = 0.6
    seed: int = 0
    threads: int = 1
    pivots: int = 250
    entropy_normalize: bool = True
    lazy_log_base: float = math.e
    early_alpha_exit: bool = True
    linear_solver: str = "cg"

    def __post_init__(self):
        if not (self.alpha_start >= self.alpha_end > 0):
            raise ValidationError("need alpha_start >= alpha_end > 0")
        if not (0 < self.alpha_rate < 1):
            raise ValidationError("need 0 < alpha_rate < 1")
        if self.q is not None and self.q <= -2:
            raise ValidationError("entropy exponent q must be > -2")
        if self.conv_tol <= 0 or self.cg_tol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.solves_per_alpha < 1 or self.cg_max_iter < 1:
            raise ValidationError("iteration caps must be >= 1")
        if self.theta < 0:
            raise ValidationError("opening parameter theta must be >= 0")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")

    def alphas(self) -> list[float]:
        """The geometric alpha schedule, e.g. 1, 0.3, 0.09, 0.027, 0.0081."""
        out = [self.alpha_start]
        a = self.alpha_start * self.alpha_rate
        while a >= self.alpha_end:
            out.append(a)
            a *= self.alpha_rate
        return out


@dataclass(frozen=True)
class InstanceDiagnostics:
    """Report from validate_instance; purely informational."""

    bound_violations: int
    nonfinite_bounds: int
    components: int
    isolated_vertices: int

    @property
    def ok(self) -> bool:
        return self.bound_violations == 0 and self.nonfinite_bounds == 0


def validate_instance(inst: Instance) -> InstanceDiagnostics:
    """Check bound sanity and connectivity; never raises."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    finite = np.isfinite(inst.lower) & np.isfinite(inst.upper)
    nonfinite = int((~finite).sum())
    bound_viol = int((inst.lower[finite] > inst.upper[finite]).sum())
    g = inst.graph
    if g.n == 0:
        ncomp = 0
    elif g.m == 0:
        ncomp = g.n
    else:
        v, w = g.edges[:, 0], g.edges[:, 1]
        adj = coo_matrix((np.ones(g.m), (v, w)), shape=(g.n, g.n))
        ncomp, _ = connected_components(adj, directed=False)
    isolated = int((g.degrees == 0).sum())
    return InstanceDiagnostics(bound_viol, nonfinite, int(ncomp), isolated)


def midpoint_distances(inst: Instance) -> np.ndarray:
    """Per-edge interval midpoints (l + u) / 2, the solver's targets."""
    return (inst.lower + inst.upper) / 2.0


def confidence_weight(c) -> np.ndarray | float:
    """Error-penalty weight for a confidence value: 1 + 5*exp(-5*(1-c)).

    Maps [0, 1] onto roughly [1, 6], rising sharply above c = 0.7 so
    that near-certain intervals dominate the weighted error.
    """
    arr = np.asarray(c, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValidationError("confidence values must lie in [0, 1]")
    w = 1.0 + 5.0 * np.exp(-5.0 * (1.0 - arr))
    return float(w) if np.isscalar(c) or arr.ndim == 0 else w


def check_embedding(x: np.ndarray, n: int) -> np.ndarray:
    """Validate an (n, 3) coordinate array and return it as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n, 3):
        raise ValidationError(f"embedding must be ({n}, 3), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("embedding contains non-finite coordinates")
    return x
