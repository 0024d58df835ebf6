"""LSH key maps and microbatch refinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrangement import Designation, Microbatch
from .data import AssociationMatrix, read_triples
from .errors import ParseError, UndefinedKeyError
from .sampling import segment_argmin


@dataclass(frozen=True)
class LshMap:
    """One key per entity on ``axis``; equal keys mean a collision."""

    axis: Designation
    keys: np.ndarray

    def __len__(self):
        return int(self.keys.size)


def jaccard_lsh_map(kappa: AssociationMatrix, axis: Designation, rng: np.random.Generator,
                    on_empty: str = "error", method: str = "cws") -> LshMap:
    """Map whose keys collide with probability equal to the weighted Jaccard.

    ``method="cws"`` (default) is consistent weighted sampling: per
    context j shared r_j, c_j ~ Gamma(2, 1) and b_j ~ U(0, 1); row i
    quantizes each positive weight to level t_ij = floor(ln k_ij / r_j + b_j)
    and keys on the (j, t_ij) minimizing ln c_j - r_j (t_ij - b_j + 1).
    Collisions then happen with probability exactly sum min / sum max.

    ``method="race"`` keys on argmin_j u_j / kappa_ij with shared
    u_j ~ Exp(1).  Its collision probability is the probability Jaccard,
    which matches the weighted Jaccard only for 0/1 or proportional
    vectors and exceeds it otherwise.

    Smaller column index wins ties in both.  Entities without entries
    raise :class:`UndefinedKeyError`, or with ``on_empty="singleton"``
    get a private negative key that collides with nothing.
    """
    if axis is Designation.FOCUS:
        index, n_other = kappa.by_row, kappa.n_context
    else:
        index, n_other = kappa.by_col, kappa.n_focus
    members, weights = index.members_by_id, index.weights_by_id
    if method == "race":
        u = rng.exponential(size=n_other)
        pos = segment_argmin(u[members] / weights, index.ptr)
        level = None
    elif method == "cws":
        r = rng.gamma(2.0, size=n_other)
        c = rng.gamma(2.0, size=n_other)
        b = rng.random(n_other)
        rm, bm = r[members], b[members]
        t = np.floor(np.log(weights) / rm + bm)
        pos = segment_argmin(np.log(c[members]) - rm * (t - bm + 1.0), index.ptr)
        level = t
    else:
        raise ValueError(f"method must be 'cws' or 'race', not {method!r}")
    empty = pos < 0
    keys = np.empty(index.n_groups, dtype=np.int64)
    hit = pos[~empty]
    keys[~empty] = members[hit]
    if level is not None:
        # pack (column, level); levels stay far inside 32 bits for finite weights
        keys[~empty] = (keys[~empty] << 32) + (level[hit].astype(np.int64) + (1 << 31))
    if empty.any():
        if on_empty != "singleton":
            first = int(np.flatnonzero(empty)[0])
            raise UndefinedKeyError(f"{axis.value} entity {first} has no positive entries")
        keys[empty] = -1 - np.flatnonzero(empty)
    return LshMap(axis, keys)


def angular_lsh_map(coarse: np.ndarray, axis: Designation, rng: np.random.Generator) -> LshMap:
    """Random-hyperplane map: key is the sign of the projection on a random unit vector."""
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.ndim != 2:
        raise ValueError("coarse embedding must be a 2-d array")
    norms = np.linalg.norm(coarse, axis=1)
    if np.any(norms == 0):
        first = int(np.flatnonzero(norms == 0)[0])
        raise UndefinedKeyError(f"{axis.value} entity {first} has a zero coarse vector")
    direction = rng.standard_normal(coarse.shape[1])
    direction /= np.linalg.norm(direction)
    return LshMap(axis, np.where(coarse @ direction >= 0, 1, -1).astype(np.int64))


def _check_axis(mb: Microbatch, maps):
    for m in maps:
        if m.axis is not mb.designation:
            raise ValueError(f"{m.axis.value} map applied to a {mb.designation.value} microbatch")


def refine(mb: Microbatch, maps, rng: np.random.Generator | None = None) -> list[Microbatch]:
    """Partition ``mb`` by the tuple of keys its designated entities get under ``maps``.

    Parts come out in first-occurrence order, or shuffled when ``rng``
    is given.
    """
    maps = list(maps)
    if not maps:
        return [mb]
    _check_axis(mb, maps)
    ent = mb.entities
    keys = np.stack([m.keys[ent] for m in maps], axis=1)
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    if first.size == 1:
        return [mb]
    inv = inv.reshape(-1)
    parts = [mb.subset(np.flatnonzero(inv == g)) for g in np.argsort(first)]
    if rng is not None:
        parts = [parts[k] for k in rng.permutation(len(parts))]
    return parts


@dataclass
class RefineStats:
    calls: int = 0
    exhausted: int = 0  # calls that ran out of maps with oversize parts left
    maps_used: int = 0


def adaptive_refine(mb: Microbatch, map_pool, cap: int, rng: np.random.Generator,
                    stats: RefineStats | None = None) -> list[Microbatch]:
    """Apply pool maps (random order, no repeats) to oversize parts until all fit ``cap``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if stats is not None:
        stats.calls += 1
    if len(mb) <= cap:
        return [mb]
    pool = list(map_pool)
    if not pool:
        raise ValueError("map pool is empty")
    _check_axis(mb, pool)
    parts = [mb]
    for k in rng.permutation(len(pool)):
        if all(len(p) <= cap for p in parts):
            break
        m = pool[int(k)]
        if stats is not None:
            stats.maps_used += 1
        nxt = []
        for p in parts:
            nxt.extend(refine(p, [m]) if len(p) > cap else [p])
        parts = nxt
    if stats is not None and any(len(p) > cap for p in parts):
        stats.exhausted += 1
    if len(parts) > 1:
        parts = [parts[k] for k in rng.permutation(len(parts))]
    return parts


def oracle_refine(mb: Microbatch, block_labels) -> list[Microbatch]:
    """Partition by ground-truth block label of the designated entities."""
    labels = np.asarray(block_labels)
    ent = mb.entities
    if ent.max() >= labels.size or np.any(labels[ent] < 0):
        raise ValueError("block labels do not cover every entity of the microbatch")
    return refine(mb, [LshMap(mb.designation, labels.astype(np.int64))])


# ---------------------------------------------------------------------------
# precomputed pools

@dataclass
class LshPool:
    axis: Designation
    kind: str
    maps: list[LshMap] = field(default_factory=list)

    def __len__(self):
        return len(self.maps)

    def __iter__(self):
        return iter(self.maps)


def build_pool(kind: str, axis: Designation, size: int, rng: np.random.Generator, *,
               kappa: AssociationMatrix | None = None, coarse: np.ndarray | None = None) -> LshPool:
    if kind == "jaccard":
        if kappa is None:
            raise ValueError("jaccard maps need the association matrix")
        maps = [jaccard_lsh_map(kappa, axis, rng, on_empty="singleton") for _ in range(size)]
    elif kind == "angular":
        if coarse is None:
            raise ValueError("angular maps need a coarse embedding")
        maps = [angular_lsh_map(coarse, axis, rng) for _ in range(size)]
    else:
        raise ValueError(f"unknown LSH kind {kind!r}")
    return LshPool(axis, kind, maps)


def save_pool(pool: LshPool, path) -> None:
    """Sparse triple text: header ``n_maps n_entities count``, then ``map entity key``."""
    n = len(pool.maps[0]) if pool.maps else 0
    lines = [f"# axis={pool.axis.value} kind={pool.kind}",
             f"{len(pool.maps)} {n} {len(pool.maps) * n}"]
    for k, m in enumerate(pool.maps):
        lines.extend(f"{k} {e} {key}" for e, key in enumerate(m.keys.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pool(path) -> LshPool:
    path = Path(path)
    first = path.open(encoding="utf-8").readline().strip()
    meta = dict(tok.split("=", 1) for tok in first.lstrip("#").split() if "=" in tok)
    if "axis" not in meta or "kind" not in meta:
        raise ParseError("missing '# axis=... kind=...' line", 1, str(path))
    (n_maps, n_ent, _), mi, ei, kv = read_triples(path)
    keys = np.zeros((n_maps, n_ent), dtype=np.int64)
    keys[mi, ei] = np.array([int(k) for k in kv], dtype=np.int64)
    axis = Designation(meta["axis"])
    return LshPool(axis, meta["kind"], [LshMap(axis, keys[k].copy()) for k in range(n_maps)])
