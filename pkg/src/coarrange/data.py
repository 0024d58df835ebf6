"""Association matrices: storage, indexes, generation, ingestion and splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError, UndefinedSimilarityError
from .sampling import AliasTable


def _segment_sums(values: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    # np.sum on a contiguous slice uses pairwise summation
    return np.array([values[ptr[k]:ptr[k + 1]].sum() for k in range(ptr.size - 1)],
                    dtype=np.float64)


class AxisIndex:
    """Entries grouped by one axis of the matrix.

    Group ``g`` (a column when grouping by column) owns the slice
    ``ptr[g]:ptr[g+1]`` of two orderings of its entries:

    * ``members`` / ``weights`` / ``entry_ids`` sorted by weight
      descending, ties by member id ascending -- the threshold index.
    * ``members_by_id`` / ``weights_by_id`` sorted by member id.
    """

    def __init__(self, n_groups: int, group: np.ndarray, member: np.ndarray,
                 weight: np.ndarray):
        self.n_groups = n_groups
        counts = np.bincount(group, minlength=n_groups)
        self.ptr = np.zeros(n_groups + 1, dtype=np.int64)
        np.cumsum(counts, out=self.ptr[1:])

        by_id = np.lexsort((member, group))
        self.members_by_id = member[by_id]
        self.weights_by_id = weight[by_id]
        self.entry_ids_by_id = by_id

        desc = np.lexsort((member, -weight, group))
        self.entry_ids = desc
        self.members = member[desc]
        self.weights = weight[desc]
        self._neg_weights = -self.weights

        self.sums = _segment_sums(self.weights_by_id, self.ptr)
        self.maxima = np.zeros(n_groups, dtype=np.float64)
        nonempty = counts > 0
        self.maxima[nonempty] = self.weights[self.ptr[:-1][nonempty]]

    def degree(self) -> np.ndarray:
        return np.diff(self.ptr)

    def slice(self, g: int) -> slice:
        return slice(int(self.ptr[g]), int(self.ptr[g + 1]))

    def count_at_least(self, g: int, threshold: float) -> int:
        """Number of entries of group g with weight >= threshold."""
        s = self.slice(g)
        return int(np.searchsorted(self._neg_weights[s], -threshold, side="right"))

    def at_least(self, g: int, threshold: float) -> np.ndarray:
        s = self.slice(g)
        k = np.searchsorted(self._neg_weights[s], -threshold, side="right")
        return self.members[s.start:s.start + k]

    def counts_at_least(self, groups: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
        """Vectorized ``count_at_least`` over many (group, threshold) queries."""
        out = np.empty(groups.size, dtype=np.int64)
        order = np.argsort(groups, kind="stable")
        sorted_groups = groups[order]
        bounds = np.flatnonzero(np.diff(sorted_groups)) + 1
        for chunk in np.split(order, bounds):
            if chunk.size == 0:
                continue
            s = self.slice(int(groups[chunk[0]]))
            out[chunk] = np.searchsorted(self._neg_weights[s], -thresholds[chunk], side="right")
        return out


class AssociationMatrix:
    """Sparse nonnegative association matrix with per-axis indexes.

    Rows are focus entities and columns are context entities.  The
    canonical entry order (``rows``, ``cols``, ``vals``) is by row and
    then column.  Instances are treated as immutable.
    """

    def __init__(self, n_focus: int, n_context: int, rows, cols, vals, *,
                 focus_ids=None, context_ids=None):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise DataError("rows, cols and vals must be 1-d arrays of equal length")
        if n_focus < 1 or n_context < 1:
            raise DataError("matrix dimensions must be positive")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_focus:
                raise DataError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_context:
                raise DataError("column index out of range")
            if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
                raise DataError("stored weights must be finite and strictly positive")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                raise DataError("duplicate (row, column) entries")
        self.n_focus = int(n_focus)
        self.n_context = int(n_context)
        self.rows, self.cols, self.vals = rows, cols, vals
        self.focus_ids = None if focus_ids is None else list(focus_ids)
        self.context_ids = None if context_ids is None else list(context_ids)
        self.by_row = AxisIndex(self.n_focus, rows, cols, vals)
        self.by_col = AxisIndex(self.n_context, cols, rows, vals)
        self.total = math.fsum(vals.tolist())

    @classmethod
    def from_counts(cls, n_focus: int, n_context: int, rows, cols, weights=None):
        """Build from possibly repeated (row, col) occurrences, summing weights."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        keys = rows * n_context + cols
        if weights is None:
            uniq, counts = np.unique(keys, return_counts=True)
            vals = counts.astype(np.float64)
        else:
            uniq, inv = np.unique(keys, return_inverse=True)
            vals = np.bincount(inv, weights=np.asarray(weights, dtype=np.float64))
        return cls(n_focus, n_context, uniq // n_context, uniq % n_context, vals)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_focus, self.n_context)

    @property
    def row_sums(self) -> np.ndarray:
        return self.by_row.sums

    @property
    def col_sums(self) -> np.ndarray:
        return self.by_col.sums

    @property
    def row_max(self) -> np.ndarray:
        return self.by_row.maxima

    @property
    def col_max(self) -> np.ndarray:
        return self.by_col.maxima

    @property
    def col_desc_index(self) -> AxisIndex:
        return self.by_col

    @property
    def row_desc_index(self) -> AxisIndex:
        return self.by_row

    def axis(self, focus_axis: bool) -> AxisIndex:
        """Index grouping by the *other* axis' anchor.

        Focus-axis entities are rows, so the index that enumerates the
        focus entities of a column is ``by_col``.
        """
        return self.by_col if focus_axis else self.by_row

    def P(self, j: int, t: float) -> np.ndarray:
        """Rows i with kappa_ij >= t * M_j, for t in (0, 1]."""
        if not 0.0 < t <= 1.0:
            raise ValueError("t must lie in (0, 1]")
        return self.by_col.at_least(j, t * self.by_col.maxima[j])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s = self.by_row.slice(i)
        return self.by_row.members_by_id[s], self.by_row.weights_by_id[s]

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        s = self.by_col.slice(j)
        return self.by_col.members_by_id[s], self.by_col.weights_by_id[s]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def dense_row(self, i: int) -> np.ndarray:
        out = np.zeros(self.n_context)
        cols, vals = self.row(i)
        out[cols] = vals
        return out

    def dense_col(self, j: int) -> np.ndarray:
        out = np.zeros(self.n_focus)
        rows, vals = self.col(j)
        out[rows] = vals
        return out

    def contains(self, rows, cols) -> np.ndarray:
        """Membership of (row, col) pairs in the support."""
        keys = np.asarray(rows, dtype=np.int64) * self.n_context + np.asarray(cols, dtype=np.int64)
        support = self.rows * self.n_context + self.cols  # already sorted
        pos = np.searchsorted(support, keys)
        pos = np.minimum(pos, max(support.size - 1, 0))
        return (support.size > 0) & (support[pos] == keys)

    # cached samplers; the matrix never changes after construction
    @cached_property
    def entry_sampler(self) -> AliasTable:
        return AliasTable(self.vals)

    @cached_property
    def col_max_sampler(self) -> AliasTable:
        return AliasTable(self.col_max)

    @cached_property
    def row_max_sampler(self) -> AliasTable:
        return AliasTable(self.row_max)

    @cached_property
    def col_sum_sampler(self) -> AliasTable:
        return AliasTable(self.col_sums)

    @cached_property
    def row_sum_sampler(self) -> AliasTable:
        return AliasTable(self.row_sums)

    def __repr__(self):
        return (f"AssociationMatrix(n_focus={self.n_focus}, n_context={self.n_context}, "
                f"nnz={self.nnz}, total={self.total:g})")

    def __eq__(self, other):
        if not isinstance(other, AssociationMatrix):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.vals, other.vals))

    __hash__ = None


# ---------------------------------------------------------------------------
# stochastic blocks

@dataclass(frozen=True)
class BlocksConfig:
    n: int
    B: int
    r: int
    p: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.B < 1:
            raise ConfigError("n and B must be positive")
        if self.n % self.B:
            raise ConfigError(f"block count B={self.B} does not divide n={self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"in-block probability p={self.p} outside [0, 1]")
        if self.r < 1:
            raise ConfigError("number of interactions r must be at least 1")
        if self.B == 1 and self.p < 1.0:
            raise ConfigError("with a single block there are no out-of-block columns; need p=1")

    @property
    def block_size(self) -> int:
        return self.n // self.B

    def labels(self) -> np.ndarray:
        """Block label of each row (and of each column; the matrix is square)."""
        return np.arange(self.n) // self.block_size


def generate_blocks(cfg: BlocksConfig) -> AssociationMatrix:
    """Stochastic blocks association counts.

    Each of the r interactions picks a uniform row, then with probability
    p a uniform column of the same block and otherwise a uniform column
    outside it; kappa_ij counts how often (i, j) was drawn.
    """
    rng = np.random.default_rng(cfg.seed)
    s = cfg.block_size
    rows = rng.integers(cfg.n, size=cfg.r)
    in_block = rng.random(cfg.r) < cfg.p
    block_start = (rows // s) * s
    cols = np.empty(cfg.r, dtype=np.int64)
    k = int(in_block.sum())
    cols[in_block] = block_start[in_block] + rng.integers(s, size=k)
    out = ~in_block
    if out.any():
        off = rng.integers(cfg.n - s, size=int(out.sum()))
        cols[out] = np.where(off < block_start[out], off, off + s)
    return AssociationMatrix.from_counts(cfg.n, cfg.n, rows, cols)


# ---------------------------------------------------------------------------
# review ingestion

def load_reviews(path, score_threshold: float = 3.0, reweight: bool = False,
                 reweight_exponent: float = 0.75, delimiter: str = ",",
                 skip_header: bool = False, raw_sums: bool = False) -> AssociationMatrix:
    """Read ``user<delim>item<delim>score`` records into a binarized matrix.

    Scores >= ``score_threshold`` become 1 and others are dropped.  With
    ``reweight`` each kept entry becomes 1 / (row_sum * col_sum) ** exponent,
    where sums come from the binarized matrix, or from the raw scores of
    every parsed record when ``raw_sums`` is set.  Repeated (user, item)
    records keep their maximum score.  Ids are dense, in first-seen order,
    and the original strings are kept on the returned matrix.
    """
    path = Path(path)
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    best: dict[tuple[int, int], float] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            text = line.rstrip("\r\n")
            if not text.strip():
                continue
            parts = text.split(delimiter)
            if len(parts) < 3:
                raise ParseError(f"expected user{delimiter}item{delimiter}score, got {text!r}",
                                 line=lineno, path=str(path))
            user, item, raw = parts[0].strip(), parts[1].strip(), parts[2].strip()
            if not user or not item:
                raise ParseError("empty user or item id", line=lineno, path=str(path))
            try:
                score = float(raw)
            except ValueError:
                raise ParseError(f"score {raw!r} is not a number", line=lineno,
                                 path=str(path)) from None
            if not math.isfinite(score):
                raise ParseError(f"score {raw!r} is not finite", line=lineno, path=str(path))
            u = users.setdefault(user, len(users))
            v = items.setdefault(item, len(items))
            key = (u, v)
            if key not in best or score > best[key]:
                best[key] = score

    kept = [(u, v) for (u, v), s in best.items() if s >= score_threshold]
    if not kept:
        raise DataError(f"{path}: no records with score >= {score_threshold}")
    rows = np.array([k[0] for k in kept], dtype=np.int64)
    cols = np.array([k[1] for k in kept], dtype=np.int64)
    vals = np.ones(rows.size)
    if reweight:
        if raw_sums:
            all_keys = np.array(list(best.keys()), dtype=np.int64)
            scores = np.array(list(best.values()))
            rs = np.bincount(all_keys[:, 0], weights=scores, minlength=len(users))
            cs = np.bincount(all_keys[:, 1], weights=scores, minlength=len(items))
        else:
            rs = np.bincount(rows, minlength=len(users)).astype(np.float64)
            cs = np.bincount(cols, minlength=len(items)).astype(np.float64)
        vals = 1.0 / (rs[rows] * cs[cols]) ** reweight_exponent
    return AssociationMatrix(len(users), len(items), rows, cols, vals,
                             focus_ids=list(users), context_ids=list(items))


# ---------------------------------------------------------------------------
# train / test splitting

@dataclass
class TestSplit:
    train: AssociationMatrix
    positives: np.ndarray  # (k, 2) held-out pairs, in pick order
    negatives: np.ndarray  # (m, 2) zero entries of the original matrix
    seed: int
    original_degree: np.ndarray = field(default=None, repr=False)

    __test__ = False  # not a pytest class


def split_train_test(kappa: AssociationMatrix, fraction: float = 0.2,
                     n_negatives: int | None = None, seed: int = 0) -> TestSplit:
    """Hold out a weighted sample of nonzero entries.

    Entries are picked without replacement with probability proportional
    to their weight (successive sampling), realized with exponential
    keys: the k smallest Exp(1)/weight keys have the same law as k
    successive weighted draws with removal, and sorting them gives the
    pick order.  Negatives are uniform distinct zero entries.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError("fraction must lie strictly between 0 and 1")
    k = int(round(fraction * kappa.nnz))
    if k == 0:
        raise ConfigError(f"fraction {fraction} of {kappa.nnz} entries rounds to zero")
    if k >= kappa.nnz:
        raise ConfigError("fraction leaves no training entries")
    rng = np.random.default_rng(seed)
    keys = rng.exponential(size=kappa.nnz) / kappa.vals
    picked = np.argsort(keys, kind="stable")[:k]
    held = np.zeros(kappa.nnz, dtype=bool)
    held[picked] = True
    positives = np.stack([kappa.rows[picked], kappa.cols[picked]], axis=1)
    keep = ~held
    train = AssociationMatrix(kappa.n_focus, kappa.n_context, kappa.rows[keep],
                              kappa.cols[keep], kappa.vals[keep],
                              focus_ids=kappa.focus_ids, context_ids=kappa.context_ids)

    m = k if n_negatives is None else int(n_negatives)
    n_zero = kappa.n_focus * kappa.n_context - kappa.nnz
    if m > n_zero:
        raise DataError(f"requested {m} negative pairs but only {n_zero} zero entries exist")
    chosen: dict[int, None] = {}
    while len(chosen) < m:
        need = m - len(chosen)
        cand_r = rng.integers(kappa.n_focus, size=2 * need + 16)
        cand_c = rng.integers(kappa.n_context, size=2 * need + 16)
        ok = ~kappa.contains(cand_r, cand_c)
        for key in (cand_r[ok] * kappa.n_context + cand_c[ok]).tolist():
            if key not in chosen:
                chosen[key] = None
                if len(chosen) == m:
                    break
    neg_keys = np.fromiter(chosen.keys(), dtype=np.int64, count=m)
    negatives = np.stack([neg_keys // kappa.n_context, neg_keys % kappa.n_context], axis=1)
    return TestSplit(train=train, positives=positives, negatives=negatives, seed=seed,
                     original_degree=kappa.by_row.degree())


# ---------------------------------------------------------------------------
# similarity

def weighted_jaccard(v, u) -> float:
    """Sum of coordinate minima over sum of coordinate maxima."""
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v.shape != u.shape:
        raise ValueError(f"shape mismatch {v.shape} vs {u.shape}")
    if np.any(v < 0) or np.any(u < 0):
        raise ValueError("weighted Jaccard needs nonnegative vectors")
    den = np.maximum(v, u).sum()
    if den == 0:
        raise UndefinedSimilarityError("weighted Jaccard of two all-zero vectors")
    return float(np.minimum(v, u).sum() / den)


# ---------------------------------------------------------------------------
# persistence

def save_matrix(kappa: AssociationMatrix, path) -> None:
    """Write ``n_focus n_context nnz`` then one ``i j value`` line per entry.

    Values are written with ``repr`` so reading them back is bit-exact.
    When the matrix carries original string ids they go to a sidecar
    ``<path>.ids`` file.
    """
    path = Path(path)
    lines = [f"{kappa.n_focus} {kappa.n_context} {kappa.nnz}"]
    lines.extend(f"{i} {j} {v!r}" for i, j, v in
                 zip(kappa.rows.tolist(), kappa.cols.tolist(), kappa.vals.tolist()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if kappa.focus_ids is not None or kappa.context_ids is not None:
        side = ["focus\t" + str(k) + "\t" + s for k, s in enumerate(kappa.focus_ids or [])]
        side += ["context\t" + str(k) + "\t" + s for k, s in enumerate(kappa.context_ids or [])]
        Path(str(path) + ".ids").write_text("\n".join(side) + "\n", encoding="utf-8")


def read_triples(path):
    """Parse the sparse triple text format; returns (header ints, i, j, value strings)."""
    path = Path(path)
    header = None
    ii, jj, vv = [], [], []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if header is None:
                if len(parts) != 3:
                    raise ParseError("header must be 'n_rows n_cols count'", lineno, str(path))
                try:
                    header = tuple(int(x) for x in parts)
                except ValueError:
                    raise ParseError("non-integer header", lineno, str(path)) from None
                continue
            if len(parts) != 3:
                raise ParseError(f"expected 'i j value', got {text!r}", lineno, str(path))
            try:
                ii.append(int(parts[0]))
                jj.append(int(parts[1]))
            except ValueError:
                raise ParseError("non-integer index", lineno, str(path)) from None
            vv.append(parts[2])
    if header is None:
        raise ParseError("missing header line", None, str(path))
    if len(ii) != header[2]:
        raise ParseError(f"header announces {header[2]} entries, found {len(ii)}", None, str(path))
    return header, np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64), vv


def load_matrix(path) -> AssociationMatrix:
    header, ii, jj, vv = read_triples(path)
    try:
        vals = np.array([float(v) for v in vv], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(str(exc), None, str(path)) from None
    focus_ids = context_ids = None
    side = Path(str(path) + ".ids")
    if side.exists():
        focus, context = [], []
        for line in side.read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            axis, _, name = line.split("\t", 2)
            (focus if axis == "focus" else context).append(name)
        focus_ids, context_ids = focus or None, context or None
    try:
        return AssociationMatrix(header[0], header[1], ii, jj, vals,
                                 focus_ids=focus_ids, context_ids=context_ids)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
