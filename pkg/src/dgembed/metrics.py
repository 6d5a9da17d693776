"""Quality measures: interval errors, LDME, Kabsch superposition, RMSD.

All functions are pure. Distance data cannot distinguish a structure
from its mirror image, so `rmsd` scores both the embedding and its
reflection and reports the better fit.
"""

from dataclasses import dataclass

import numpy as np

from .core import Instance

VIOLATION_THRESHOLD = 1e-9


def edge_lengths(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Euclidean length of each edge under coordinates x."""
    d = x[edges[:, 0]] - x[edges[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def interval_errors(x: np.ndarray, inst: Instance) -> np.ndarray:
    """Squared violation of each interval: max(l - len, len - u, 0)^2."""
    lengths = edge_lengths(x, inst.graph.edges)
    dev = np.maximum(inst.lower - lengths, lengths - inst.upper)
    return np.square(np.maximum(dev, 0.0))


def edge_error(x: np.ndarray, edge, lower: float, upper: float) -> float:
    """Squared interval violation for a single edge (v, w)."""
    v, w = edge
    length = float(np.linalg.norm(x[v] - x[w]))
    dev = max(lower - length, length - upper, 0.0)
    return dev * dev


def ldme(x: np.ndarray, inst: Instance) -> float:
    """Root mean squared interval violation over all edges.

    Zero exactly when every distance constraint is met.
    """
    if inst.m == 0:
        raise ValueError("ldme is undefined for an instance with no edges")
    return float(np.sqrt(interval_errors(x, inst).mean()))


@dataclass(frozen=True)
class SuperpositionResult:
    """Optimal rigid alignment of one point set onto another."""

    rotation: np.ndarray   # (3, 3), proper: det = +1
    translation: np.ndarray  # (3,)
    rmsd: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


def kabsch_superpose(p: np.ndarray, q: np.ndarray) -> SuperpositionResult:
    """Least-squares rigid transform taking point set p onto q.

    Classic SVD construction on the 3x3 cross-covariance with a
    determinant correction, so the rotation is always proper (no
    reflections). Coincident degenerate inputs fall back to the
    identity rotation.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    if p.shape != q.shape or len(p) < 1:
        raise ValueError(f"point sets must match and be non-empty: {p.shape} vs {q.shape}")
    pc, qc = p.mean(axis=0), q.mean(axis=0)
    h = (p - pc).T @ (q - qc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    corr = np.diag([1.0, 1.0, d])
    rot = vt.T @ corr @ u.T
    t = qc - rot @ pc
    moved = p @ rot.T + t
    value = float(np.sqrt(np.mean(np.sum((moved - q) ** 2, axis=1))))
    return SuperpositionResult(rot, t, value)


def rmsd(x: np.ndarray, ref: np.ndarray) -> float:
    """RMSD against a reference after optimal superposition, in Angstrom.

    Evaluates both x and its mirror image and returns the smaller
    value; interval data determines a structure only up to reflection.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"size mismatch: {x.shape} vs {ref.shape}")
    direct = kabsch_superpose(x, ref).rmsd
    mirrored = x.copy()
    mirrored[:, 0] = -mirrored[:, 0]
    return min(direct, kabsch_superpose(mirrored, ref).rmsd)


@dataclass(frozen=True)
class ViolationStats:
    """Count, fraction and worst value of interval violations."""

    count: int
    fraction: float
    max_error: float


def violation_stats(x: np.ndarray, inst: Instance) -> ViolationStats:
    """Edges whose interval error exceeds the 1e-9 numerical-noise guard."""
    if inst.m == 0:
        return ViolationStats(0, 0.0, 0.0)
    errs = interval_errors(x, inst)
    violating = errs > VIOLATION_THRESHOLD
    return ViolationStats(int(violating.sum()), float(violating.mean()), float(errs.max()))


def weighted_total_error(x: np.ndarray, inst: Instance) -> float:
    """Sum of weight * interval error; the objective the refiners track."""
    return float(np.dot(inst.weight, interval_errors(x, inst)))
