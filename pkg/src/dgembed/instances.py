"""Benchmark instance construction and (de)serialization.

Instances are built from atomic coordinates: either the ATOM records of
a PDB file (first chain only) or a synthetic folded chain. Three
recipes mirror common experimental settings:

  normal   - sample a fraction p of all atom pairs closer than the
             cutoff, noise the intervals multiplicatively.
  bonds    - all covalent bonds as exact distances, plus noised contacts.
  weighted - bonds recipe whose contacts split 25/50/25 into certain
             (+-0.1 A, c=1), intermediate (sigma=0.1, c=0.75) and
             uncertain (sigma=0.5, c=0.5) groups.

The on-disk instance format is line-oriented text (version 1):

    dgp 1 <n> <m> <has_ref>
    <v> <w> <lower> <upper> [<confidence> [<weight>]]   (m lines)
    <x> <y> <z>                                         (n lines if has_ref)

with '#' comments; "# meta <key> <value>" lines round-trip the
provenance metadata.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from .core import (Graph, Instance, ValidationError, build_graph,
                   confidence_weight, make_instance)

CONTACT_CUTOFF = 5.0

# covalent bond length ceilings by element pair (Angstrom)
_BOND_H = 1.2
_BOND_CNO = 1.8
_BOND_S = 2.0
_BOND_DEFAULT = 1.9


@dataclass(frozen=True)
class AtomSet:
    """Atoms in serial order with coordinates and light annotation."""

    elements: tuple
    coords: np.ndarray       # (n, 3)
    residue_index: tuple
    chain_id: str = ""
    serials: tuple = ()

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float64))
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValidationError(f"coords must be (n, 3), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("atom coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return len(self.coords)


class PDBParseError(ValueError):
    """Malformed fixed-width record; message carries the line number."""


def _element_from_atom_name(name: str) -> str:
    stripped = name.strip().lstrip("0123456789")
    return stripped[:1].upper() if stripped else "X"


def parse_pdb_atoms(text: str) -> AtomSet:
    """Extract ATOM records of the first chain from PDB-format text.

    HETATM, ANISOU and later chains are skipped. Coordinates sit in the
    fixed columns 31-54; the element comes from columns 77-78 with a
    fallback to the atom-name field.
    """
    elements: list[str] = []
    coords: list[tuple[float, float, float]] = []
    residues: list[int] = []
    serials: list[int] = []
    chain = None
    saw_hetatm = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "HETATM":
            saw_hetatm = True
        if rec != "ATOM":
            continue
        this_chain = line[21] if len(line) > 21 else " "
        if chain is None:
            chain = this_chain
        elif this_chain != chain:
            continue
        try:
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except (ValueError, IndexError):
            raise PDBParseError(
                f"line {lineno}: malformed coordinate field in ATOM record") from None
        element = line[76:78].strip() if len(line) >= 78 else ""
        if not element:
            element = _element_from_atom_name(line[12:16])
        try:
            serial = int(line[6:11])
        except ValueError:
            serial = len(serials) + 1
        try:
            resi = int(line[22:26])
        except ValueError:
            resi = 0
        elements.append(element.upper())
        coords.append((x, y, z))
        residues.append(resi)
        serials.append(serial)
    if not coords:
        import warnings
        msg = "no ATOM records found"
        if saw_hetatm:
            msg += " (file contains only HETATM entries)"
        warnings.warn(msg)
        return AtomSet((), np.zeros((0, 3)), (), chain or "", ())
    order = np.argsort(np.array(serials), kind="stable")
    return AtomSet(tuple(elements[i] for i in order),
                   np.array(coords)[order],
                   tuple(residues[i] for i in order),
                   chain or "",
                   tuple(serials[i] for i in order))


def _grid_pairs(coords: np.ndarray, cutoff: float):
    """Yield candidate index pairs (v < w) within cutoff via a cell grid."""
    n = len(coords)
    cells: dict[tuple, list[int]] = {}
    keys = np.floor(coords / cutoff).astype(np.int64)
    for i in range(n):
        cells.setdefault(tuple(keys[i]), []).append(i)
    seen_offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                    for dz in (-1, 0, 1)]
    for key, members in cells.items():
        base = np.array(members, dtype=np.int64)
        for off in seen_offsets:
            other_key = (key[0] + off[0], key[1] + off[1], key[2] + off[2])
            if other_key < key:
                continue
            other = cells.get(other_key)
            if other is None:
                continue
            ob = np.array(other, dtype=np.int64)
            if other_key == key:
                for ii in range(len(base)):
                    yield base[ii], base[ii + 1:]
            else:
                for ii in range(len(base)):
                    yield base[ii], ob


def _pairs_within(coords: np.ndarray, cutoff: float, strict: bool) -> np.ndarray:
    """All (v, w) pairs with distance < cutoff (<= when strict is False)."""
    out_v, out_w = [], []
    for i, cand in _grid_pairs(coords, cutoff):
        if len(cand) == 0:
            continue
        d = np.linalg.norm(coords[cand] - coords[i], axis=1)
        keep = cand[d < cutoff] if strict else cand[d <= cutoff]
        if len(keep):
            out_v.append(np.full(len(keep), i, dtype=np.int64))
            out_w.append(keep)
    if not out_v:
        return np.zeros((0, 2), dtype=np.int64)
    v = np.concatenate(out_v)
    w = np.concatenate(out_w)
    lo, hi = np.minimum(v, w), np.maximum(v, w)
    pairs = np.unique(np.column_stack([lo, hi]), axis=0)
    return pairs


def _bond_threshold(e1: str, e2: str) -> float:
    if e1 == "H" or e2 == "H":
        return _BOND_H
    if "S" in (e1, e2):
        return _BOND_S
    if e1 in ("C", "N", "O") and e2 in ("C", "N", "O"):
        return _BOND_CNO
    return _BOND_DEFAULT


def infer_bonds(atoms: AtomSet) -> np.ndarray:
    """Covalent bonds by element-pair distance thresholds, as (k, 2) ids."""
    if atoms.n == 0:
        raise ValidationError("cannot infer bonds from an empty atom set")
    cand = _pairs_within(atoms.coords, _BOND_S, strict=False)
    if len(cand) == 0:
        return cand
    d = np.linalg.norm(atoms.coords[cand[:, 0]] - atoms.coords[cand[:, 1]], axis=1)
    thr = np.array([_bond_threshold(atoms.elements[v], atoms.elements[w])
                    for v, w in cand])
    return cand[d <= thr]


def contact_edges(atoms: AtomSet, cutoff: float = CONTACT_CUTOFF,
                  bonds: np.ndarray | None = None) -> np.ndarray:
    """Pairs strictly closer than cutoff that are not covalent bonds."""
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    pairs = _pairs_within(atoms.coords, cutoff, strict=True)
    if bonds is None or len(bonds) == 0 or len(pairs) == 0:
        return pairs
    bond_keys = set(map(tuple, np.sort(np.asarray(bonds), axis=1)))
    keep = [i for i, p in enumerate(map(tuple, pairs)) if p not in bond_keys]
    return pairs[keep]


def _true_distances(coords: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.linalg.norm(coords[pairs[:, 0]] - coords[pairs[:, 1]], axis=1)


def _noised_bounds(d: np.ndarray, sigma: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Intervals [max(0, d - eps_lo), d + eps_hi], eps = |d * N(0, sigma^2)|.

    The absolute value keeps the true distance inside every interval.
    """
    eps_lo = np.abs(d * rng.normal(0.0, sigma, size=len(d)))
    eps_hi = np.abs(d * rng.normal(0.0, sigma, size=len(d)))
    return np.maximum(d - eps_lo, 0.0), d + eps_hi


def _sample_pairs(pairs: np.ndarray, p: float, rng) -> np.ndarray:
    """Independent inclusion of each pair with probability p."""
    if not 0 < p <= 1:
        raise ValidationError(f"sampling fraction p must be in (0, 1], got {p}")
    if p == 1.0:
        return pairs
    return pairs[rng.random(len(pairs)) < p]


def gen_normal_instance(atoms: AtomSet, p: float, sigma: float, seed: int,
                        cutoff: float = CONTACT_CUTOFF) -> Instance:
    """Noised intervals on a p-sample of all pairs below the cutoff."""
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    pool = _pairs_within(atoms.coords, cutoff, strict=True)
    picked = _sample_pairs(pool, p, rng)
    if len(picked) == 0:
        raise ValidationError("sampling produced no edges; raise p or the cutoff")
    g = build_graph(atoms.n, picked)
    d = _true_distances(atoms.coords, g.edges)
    lower, upper = _noised_bounds(d, sigma, rng)
    meta = {"recipe": "normal", "p": p, "sigma": sigma, "seed": seed, "cutoff": cutoff}
    return make_instance(g, lower, upper, reference=atoms.coords, meta=meta)


def gen_bonds_instance(atoms: AtomSet, p: float, sigma: float, seed: int,
                       cutoff: float = CONTACT_CUTOFF) -> Instance:
    """Exact bond distances plus a noised p-sample of the contact edges."""
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    bonds = infer_bonds(atoms)
    contacts = contact_edges(atoms, cutoff, bonds)
    picked = _sample_pairs(contacts, p, rng) if len(contacts) else contacts
    edges = np.vstack([bonds, picked]) if len(picked) else bonds
    if len(edges) == 0:
        raise ValidationError("no edges: atom set has neither bonds nor sampled contacts")
    g = build_graph(atoms.n, edges)
    d = _true_distances(atoms.coords, g.edges)
    lower, upper = _noised_bounds(d, sigma, rng)
    bond_keys = set(map(tuple, np.sort(bonds, axis=1))) if len(bonds) else set()
    is_bond = np.array([tuple(e) in bond_keys for e in g.edges])
    lower[is_bond] = d[is_bond]
    upper[is_bond] = d[is_bond]
    meta = {"recipe": "bonds", "p": p, "sigma": sigma, "seed": seed, "cutoff": cutoff}
    return make_instance(g, lower, upper, reference=atoms.coords, meta=meta)


def gen_weighted_instance(atoms: AtomSet, p: float, seed: int,
                          cutoff: float = CONTACT_CUTOFF) -> Instance:
    """Bonds recipe with confidence-tiered contacts (25/50/25 split)."""
    rng = np.random.default_rng(seed)
    bonds = infer_bonds(atoms)
    contacts = contact_edges(atoms, cutoff, bonds)
    picked = _sample_pairs(contacts, p, rng) if len(contacts) else contacts
    if len(picked) < 4:
        raise ValidationError(
            f"weighted recipe needs at least 4 sampled contact edges, got {len(picked)}")
    k = len(picked)
    perm = rng.permutation(k)
    n_certain = round(0.25 * k)
    n_mid = round(0.5 * k)
    group = np.empty(k, dtype=np.int8)
    group[perm[:n_certain]] = 0
    group[perm[n_certain:n_certain + n_mid]] = 1
    group[perm[n_certain + n_mid:]] = 2

    contact_d = _true_distances(atoms.coords, picked)
    lower = np.empty(k)
    upper = np.empty(k)
    conf = np.empty(k)
    certain = group == 0
    lower[certain] = contact_d[certain] - 0.1
    upper[certain] = contact_d[certain] + 0.1
    conf[certain] = 1.0
    for gid, sigma, c in ((1, 0.1, 0.75), (2, 0.5, 0.5)):
        mask = group == gid
        lo, up = _noised_bounds(contact_d[mask], sigma, rng)
        lower[mask], upper[mask] = lo, up
        conf[mask] = c

    edges = np.vstack([bonds, picked])
    g = build_graph(atoms.n, edges)
    m = g.m
    full_lower = np.empty(m)
    full_upper = np.empty(m)
    full_conf = np.ones(m)
    key_to_idx = {tuple(e): i for i, e in enumerate(np.sort(picked, axis=1))}
    d_all = _true_distances(atoms.coords, g.edges)
    for i, e in enumerate(map(tuple, g.edges)):
        j = key_to_idx.get(e)
        if j is None:
            full_lower[i] = d_all[i]
            full_upper[i] = d_all[i]
        else:
            full_lower[i] = lower[j]
            full_upper[i] = upper[j]
            full_conf[i] = conf[j]
    weight = confidence_weight(full_conf)
    meta = {"recipe": "weighted", "p": p, "seed": seed, "cutoff": cutoff}
    return make_instance(g, full_lower, full_upper, confidence=full_conf,
                         weight=weight, reference=atoms.coords, meta=meta)


def synthetic_chain(n: int, spacing: float = 1.5, seed: int = 0,
                    density: float = 0.045, min_separation: float = 2.0,
                    step_cos_range: tuple = (-0.5, 0.35)) -> AtomSet:
    """Random-walk chain folded into a compact ball, protein-like density.

    Consecutive points sit exactly `spacing` apart. The walk is stiff
    like a covalent backbone: the cosine between consecutive step
    directions stays inside step_cos_range, which keeps the turn angles
    in a plausible bond-angle window instead of letting the chain fold
    back on itself. Non-consecutive points keep min_separation apart so
    distance-threshold bond inference recovers the chain, and the ball
    radius follows from the target density (atoms per cubic Angstrom).
    """
    if n < 1:
        raise ValidationError("need at least one point")
    rng = np.random.default_rng(seed)
    radius = (3.0 * n / (4.0 * math.pi * density)) ** (1.0 / 3.0)
    lo_cos, hi_cos = step_cos_range
    coords = np.zeros((n, 3))
    prev_dir = None
    for i in range(1, n):
        placed = False
        attempt_sep = min_separation
        while not placed:
            for _ in range(300):
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                if prev_dir is not None:
                    c = float(direction @ prev_dir)
                    if not lo_cos <= c <= hi_cos:
                        continue
                cand = coords[i - 1] + spacing * direction
                if np.linalg.norm(cand) > radius:
                    continue
                if i > 1:
                    d = np.linalg.norm(coords[:i - 1] - cand, axis=1)
                    if d.min() < attempt_sep:
                        continue
                coords[i] = cand
                prev_dir = direction
                placed = True
                break
            else:
                attempt_sep *= 0.9  # relax if the walk painted itself into a corner
    return AtomSet(("C",) * n, coords, tuple(range(n)), chain_id="A",
                   serials=tuple(range(1, n + 1)))


# ---------------------------------------------------------------------------
# serialization


def write_instance(path, inst: Instance) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_instance(inst))


def dumps_instance(inst: Instance) -> str:
    out = io.StringIO()
    has_ref = 1 if inst.reference is not None else 0
    out.write(f"dgp 1 {inst.n} {inst.m} {has_ref}\n")
    for key in sorted(inst.meta):
        out.write(f"# meta {key} {inst.meta[key]!r}\n")
    for i in range(inst.m):
        v, w = inst.graph.edges[i]
        out.write(f"{v} {w} {float(inst.lower[i])!r} {float(inst.upper[i])!r} "
                  f"{float(inst.confidence[i])!r} {float(inst.weight[i])!r}\n")
    if has_ref:
        for row in inst.reference:
            out.write(f"{float(row[0])!r} {float(row[1])!r} {float(row[2])!r}\n")
    return out.getvalue()


class InstanceFormatError(ValueError):
    """Bad instance file; message names the offending line."""


def read_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_instance(fh.read())


def _parse_meta_value(token: str):
    if token.startswith("'") and token.endswith("'"):
        return token[1:-1]
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            continue
    return token


def loads_instance(text: str) -> Instance:
    lines = text.splitlines()
    meta: dict = {}
    body: list[tuple[int, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            parts = stripped[1:].split(None, 2)
            if len(parts) == 3 and parts[0] == "meta":
                meta[parts[1]] = _parse_meta_value(parts[2])
            continue
        body.append((lineno, stripped))
    if not body:
        raise InstanceFormatError("empty instance file")
    lineno, header = body[0]
    tokens = header.split()
    if len(tokens) != 5 or tokens[0] != "dgp":
        raise InstanceFormatError(f"line {lineno}: bad header {header!r}")
    if tokens[1] != "1":
        raise InstanceFormatError(f"line {lineno}: unsupported format version {tokens[1]}")
    try:
        n, m, has_ref = int(tokens[2]), int(tokens[3]), int(tokens[4])
    except ValueError:
        raise InstanceFormatError(f"line {lineno}: non-integer header fields") from None
    expected = 1 + m + (n if has_ref else 0)
    if len(body) < expected:
        last = body[-1][0]
        raise InstanceFormatError(
            f"truncated file: expected {expected} data lines, ran out after line {last}")
    edges = np.empty((m, 2), dtype=np.int64)
    lower = np.empty(m)
    upper = np.empty(m)
    conf = np.ones(m)
    weight = np.ones(m)
    for i in range(m):
        lineno, line = body[1 + i]
        tok = line.split()
        if len(tok) not in (4, 5, 6):
            raise InstanceFormatError(f"line {lineno}: expected 4-6 fields, got {len(tok)}")
        try:
            edges[i] = (int(tok[0]), int(tok[1]))
            lower[i], upper[i] = float(tok[2]), float(tok[3])
            if len(tok) >= 5:
                conf[i] = float(tok[4])
            if len(tok) == 6:
                weight[i] = float(tok[5])
        except ValueError:
            raise InstanceFormatError(f"line {lineno}: malformed edge record") from None
    reference = None
    if has_ref:
        reference = np.empty((n, 3))
        for i in range(n):
            lineno, line = body[1 + m + i]
            tok = line.split()
            if len(tok) != 3:
                raise InstanceFormatError(f"line {lineno}: expected 3 coordinates")
            try:
                reference[i] = [float(t) for t in tok]
            except ValueError:
                raise InstanceFormatError(f"line {lineno}: malformed coordinate") from None
    g = build_graph(n, edges)
    if g.m != m:
        raise InstanceFormatError("duplicate or invalid edges in instance file")
    order = {tuple(e): i for i, e in enumerate(np.sort(edges, axis=1))}
    perm = np.array([order[tuple(e)] for e in g.edges])
    return make_instance(g, lower[perm], upper[perm], conf[perm], weight[perm],
                         reference=reference, meta=meta)


def write_xyz(path, coords: np.ndarray, elements=None, comment: str = "") -> None:
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    if elements is None:
        elements = ["X"] * len(coords)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(coords)}\n{comment}\n")
        for el, (x, y, z) in zip(elements, coords):
            fh.write(f"{el} {float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_xyz(path) -> tuple[list, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InstanceFormatError("empty xyz file")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise InstanceFormatError("first xyz line must be the atom count") from None
    if len(lines) < 2 + count:
        raise InstanceFormatError(f"xyz file truncated: expected {count} atom lines")
    elements = []
    coords = np.empty((count, 3))
    for i in range(count):
        tok = lines[2 + i].split()
        if len(tok) != 4:
            raise InstanceFormatError(f"line {3 + i}: expected '<element> <x> <y> <z>'")
        elements.append(tok[0])
        coords[i] = [float(t) for t in tok[1:]]
    return elements, coords
