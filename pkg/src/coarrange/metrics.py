"""Embedding quality measures, similarity diagnostics and training gain."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import expit

from .arrangement import Microbatch
from .data import AssociationMatrix, TestSplit, weighted_jaccard
from .errors import EvaluationError, ParseError, ThresholdError


def _unit_rows(table: np.ndarray, ids: np.ndarray, what: str) -> np.ndarray:
    vecs = np.asarray(table[ids], dtype=np.float64)
    norms = np.linalg.norm(vecs, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise EvaluationError(f"{what} entity {int(ids[bad[0]])} has a zero embedding vector")
    return vecs / norms[:, None]


def cosine_gap(model, positives, negatives) -> float:
    """Mean cos(f_i, c_j) over positive test pairs minus the mean over negative ones."""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1, 2)
    if positives.size == 0 or negatives.size == 0:
        raise EvaluationError("cosine gap needs nonempty positive and negative test sets")

    def mean_cos(pairs):
        f = _unit_rows(model.focus, pairs[:, 0], "focus")
        c = _unit_rows(model.context, pairs[:, 1], "context")
        return float(np.einsum("ij,ij->i", f, c).mean())

    return mean_cos(positives) - mean_cos(negatives)


# ---------------------------------------------------------------------------
# precision at k

@dataclass
class BlockMembership:
    """Ground-truth classes; ``cross`` ranks contexts for each focus entity."""

    focus_labels: np.ndarray
    context_labels: np.ndarray | None = None
    cross: bool = False


@dataclass
class PairMembership:
    """Relevant contexts per focus entity; ``seen`` contexts are excluded from ranking."""

    relevant: dict[int, np.ndarray]
    seen: AssociationMatrix | None = None


def _representatives(candidates: np.ndarray, count: int, seed: int) -> np.ndarray:
    if candidates.size <= count:
        return candidates
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(candidates, size=count, replace=False))


def precision_at_k(model, membership, k: int = 10, min_degree: int = 0, degrees=None,
                   representatives: int = 500, seed: int = 0) -> float:
    """Average fraction of the top-k cosine neighbours that share the representative's class.

    Representatives are focus entities with at least ``min_degree``
    nonzeros (when ``degrees`` is given), subsampled deterministically.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n_focus = model.focus.shape[0]
    eligible = np.arange(n_focus)
    if degrees is not None:
        eligible = np.flatnonzero(np.asarray(degrees) >= min_degree)
    if isinstance(membership, PairMembership):
        eligible = np.array([i for i in eligible.tolist()
                             if len(membership.relevant.get(i, ())) > 0], dtype=np.int64)
    if eligible.size == 0:
        raise EvaluationError("no representative entities satisfy the degree filter")
    reps = _representatives(eligible, representatives, seed)

    f_reps = _unit_rows(model.focus, reps, "focus")
    if isinstance(membership, BlockMembership) and not membership.cross:
        pool = _unit_rows(model.focus, np.arange(n_focus), "focus")
    else:
        pool = _unit_rows(model.context, np.arange(model.context.shape[0]), "context")
    sims = f_reps @ pool.T
    if isinstance(membership, BlockMembership) and not membership.cross:
        sims[np.arange(reps.size), reps] = -np.inf
        n_candidates = n_focus - 1
    else:
        n_candidates = pool.shape[0]
    if isinstance(membership, PairMembership) and membership.seen is not None:
        for row, i in enumerate(reps.tolist()):
            seen_cols, _ = membership.seen.row(i)
            sims[row, seen_cols] = -np.inf
            n_candidates = min(n_candidates, pool.shape[0] - seen_cols.size)
    if n_candidates < k:
        raise EvaluationError(f"only {n_candidates} candidates for top-{k}")

    top = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    if isinstance(membership, BlockMembership):
        labels = np.asarray(membership.focus_labels)
        target = labels if not membership.cross else np.asarray(
            membership.context_labels if membership.context_labels is not None else labels)
        hits = target[top] == labels[reps][:, None]
    else:
        hits = np.zeros(top.shape, dtype=bool)
        for row, i in enumerate(reps.tolist()):
            hits[row] = np.isin(top[row], membership.relevant[i])
    return float(hits.mean(axis=1).mean())


# ---------------------------------------------------------------------------
# sub-epoch multiplicities

class SubEpochCounts:
    """Multiplicities X_ij of examples over a collection of microbatches."""

    def __init__(self, n_focus: int, n_context: int, rows, cols, counts):
        self.n_focus = n_focus
        self.n_context = n_context
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)

    @classmethod
    def from_microbatches(cls, microbatches: Iterable[Microbatch], n_focus: int, n_context: int):
        fs, cs = [], []
        for mb in microbatches:
            fs.append(mb.focus)
            cs.append(mb.context)
        if not fs:
            return cls(n_focus, n_context, [], [], [])
        keys = np.concatenate(fs) * n_context + np.concatenate(cs)
        uniq, counts = np.unique(keys, return_counts=True)
        return cls(n_focus, n_context, uniq // n_context, uniq % n_context, counts)

    def row(self, i: int) -> np.ndarray:
        out = np.zeros(self.n_context, dtype=np.int64)
        m = self.rows == i
        out[self.cols[m]] = self.counts[m]
        return out

    def col(self, j: int) -> np.ndarray:
        out = np.zeros(self.n_focus, dtype=np.int64)
        m = self.cols == j
        out[self.rows[m]] = self.counts[m]
        return out


def empirical_jaccard(X: SubEpochCounts, i: int, i2: int, axis: str = "row") -> float | None:
    """Weighted Jaccard of two multiplicity rows (or columns); None when both are empty."""
    a, b = (X.row(i), X.row(i2)) if axis == "row" else (X.col(i), X.col(i2))
    if np.maximum(a, b).sum() == 0:
        return None
    return weighted_jaccard(a, b)


# ---------------------------------------------------------------------------
# alignment effect of a shared positive context

def cosine_move_experiment(d: int, eta: float, trials: int, rng: np.random.Generator,
                           chunk: int = 100_000) -> float:
    """Mean change of cos(f1, f2) after both take a positive step towards one shared c.

    f1, f2, c ~ N(0, 1)^d; each f moves by eta * sigmoid(-f.c) * c, the
    SGNS positive-example update with c held fixed.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    total = 0.0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        f1 = rng.standard_normal((m, d))
        f2 = rng.standard_normal((m, d))
        c = rng.standard_normal((m, d))
        g1 = expit(-np.einsum("ij,ij->i", f1, c))
        g2 = expit(-np.einsum("ij,ij->i", f2, c))
        n1 = f1 + eta * g1[:, None] * c
        n2 = f2 + eta * g2[:, None] * c
        before = np.einsum("ij,ij->i", f1, f2) / (np.linalg.norm(f1, axis=1) * np.linalg.norm(f2, axis=1))
        after = np.einsum("ij,ij->i", n1, n2) / (np.linalg.norm(n1, axis=1) * np.linalg.norm(n2, axis=1))
        total += float((after - before).sum())
        done += m
    return total / trials


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class MetricSample:
    update_count: int
    cosine_gap: float
    precision_at_k: float | None = None
    wall_time: float | None = None


CSV_HEADER = "updates,cosine_gap,precision_at_k,seconds"


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class Trajectory:
    samples: list[MetricSample] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def append(self, sample: MetricSample):
        if self.samples and sample.update_count < self.samples[-1].update_count:
            raise ValueError("update counts must be nondecreasing")
        self.samples.append(sample)

    def __len__(self):
        return len(self.samples)

    def updates(self) -> np.ndarray:
        return np.array([s.update_count for s in self.samples], dtype=np.float64)

    def values(self, metric: str = "cosine_gap") -> np.ndarray:
        out = [getattr(s, metric) for s in self.samples]
        return np.array([math.nan if v is None else v for v in out], dtype=np.float64)

    def peak(self, metric: str = "cosine_gap") -> float:
        return float(np.nanmax(self.values(metric)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key}={self.meta[key]}\n")
        buf.write(CSV_HEADER + "\n")
        for s in self.samples:
            buf.write(f"{s.update_count},{_fmt(s.cosine_gap)},{_fmt(s.precision_at_k)},"
                      f"{_fmt(s.wall_time)}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        traj = cls()
        header_seen = False
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                traj.meta[key] = value
                continue
            if not line.strip():
                continue
            if not header_seen:
                if line.strip() != CSV_HEADER:
                    raise ParseError(f"expected header {CSV_HEADER!r}", lineno, str(path))
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError("expected 4 columns", lineno, str(path))
            try:
                vals = [None if p == "" else float(p) for p in parts[1:]]
                traj.append(MetricSample(int(parts[0]), *vals))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, str(path)) from None
        return traj


def first_reach(traj: Trajectory, threshold: float, metric: str = "cosine_gap") -> float:
    """Update count at which the metric first reaches ``threshold``, interpolating linearly."""
    x = traj.updates()
    y = traj.values(metric)
    for k in range(len(y)):
        if y[k] >= threshold:
            if k == 0:
                return float(x[0])
            x0, x1, y0, y1 = x[k - 1], x[k], y[k - 1], y[k]
            return float(x0 + (threshold - y0) * (x1 - x0) / (y1 - y0))
    name = traj.meta.get("name", "trajectory")
    raise ThresholdError(f"{name} never reaches {metric} >= {threshold:.6g}")


def training_gain(baseline: Trajectory, method: Trajectory, quality_fraction: float,
                  metric: str = "cosine_gap", peak: float | None = None) -> float:
    """Percent fewer updates the method needs to reach ``quality_fraction`` of its peak.

    ``peak`` defaults to the method's maximum.
    """
    if peak is None:
        peak = method.peak(metric)
    threshold = quality_fraction * peak
    u_base = first_reach(baseline, threshold, metric)
    u_method = first_reach(method, threshold, metric)
    if u_base <= 0:
        raise ThresholdError("baseline reaches the threshold at its first sample")
    return 100.0 * (u_base - u_method) / u_base


# ---------------------------------------------------------------------------
# evaluators used during training

class BlocksEvaluator:
    """Cosine gap on sampled same-block/cross-block pairs and block precision at k."""

    def __init__(self, labels, n_pairs: int = 10_000, k: int = 10, representatives: int = 500,
                 seed: int = 0, precision: bool = True, cross: bool = False):
        labels = np.asarray(labels, dtype=np.int64)
        self.labels = labels
        self.k = k
        self.representatives = representatives
        self.seed = seed
        self.precision = precision
        self.membership = BlockMembership(labels, labels, cross)
        rng = np.random.default_rng(seed)
        n = labels.size
        by_label = [np.flatnonzero(labels == b) for b in range(labels.max() + 1)]
        rows = rng.integers(n, size=n_pairs)
        pos_cols = np.array([by_label[labels[i]][rng.integers(by_label[labels[i]].size)]
                             for i in rows.tolist()], dtype=np.int64)
        self.positives = np.stack([rows, pos_cols], axis=1)
        rows = rng.integers(n, size=n_pairs)
        neg = []
        for i in rows.tolist():
            while True:
                j = int(rng.integers(n))
                if labels[j] != labels[i]:
                    break
            neg.append(j)
        self.negatives = np.stack([rows, np.array(neg, dtype=np.int64)], axis=1)

    def __call__(self, model) -> tuple[float, float | None]:
        gap = cosine_gap(model, self.positives, self.negatives)
        prec = None
        if self.precision:
            prec = precision_at_k(model, self.membership, self.k,
                                  representatives=self.representatives, seed=self.seed)
        return gap, prec


class SplitEvaluator:
    """Cosine gap on held-out pairs and precision at k against held-out contexts."""

    def __init__(self, split: TestSplit, k: int = 10, min_degree: int = 20,
                 representatives: int = 500, seed: int = 0, precision: bool = True):
        self.split = split
        self.k = k
        self.min_degree = min_degree
        self.representatives = representatives
        self.seed = seed
        self.precision = precision
        rel: dict[int, list[int]] = {}
        for i, j in split.positives.tolist():
            rel.setdefault(i, []).append(j)
        self.membership = PairMembership({i: np.array(v) for i, v in rel.items()}, split.train)

    def __call__(self, model) -> tuple[float, float | None]:
        gap = cosine_gap(model, self.split.positives, self.split.negatives)
        prec = None
        if self.precision:
            try:
                prec = precision_at_k(model, self.membership, self.k, self.min_degree,
                                      degrees=self.split.original_degree,
                                      representatives=self.representatives, seed=self.seed)
            except EvaluationError:
                prec = None
        return gap, prec
