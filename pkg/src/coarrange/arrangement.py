"""Microbatch distributions and minibatch construction.

A microbatch is an atomic random set of positive (focus, context)
pairs.  Minibatches are accumulated from whole microbatches until they
hold at least ``b`` positives and then get ``lam`` shared negative
entities on the designated side.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .data import AssociationMatrix
from .sampling import AliasTable, uniform_open_closed


class Designation(enum.Enum):
    FOCUS = "focus"
    CONTEXT = "context"

    @property
    def other(self) -> "Designation":
        return Designation.CONTEXT if self is Designation.FOCUS else Designation.FOCUS


@dataclass(frozen=True)
class Microbatch:
    designation: Designation
    focus: np.ndarray
    context: np.ndarray

    def __post_init__(self):
        if self.focus.shape != self.context.shape or self.focus.size == 0:
            raise ValueError("a microbatch holds a nonempty list of pairs")

    def __len__(self) -> int:
        return int(self.focus.size)

    @property
    def entities(self) -> np.ndarray:
        """Ids on the designated (updated) side."""
        return self.focus if self.designation is Designation.FOCUS else self.context

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.focus.tolist(), self.context.tolist()))

    def subset(self, idx) -> "Microbatch":
        return Microbatch(self.designation, self.focus[idx], self.context[idx])


@dataclass(frozen=True)
class MicrobatchBatch:
    """Many microbatches in flat form: microbatch k is ``slice(offsets[k], offsets[k+1])``."""

    designation: Designation
    focus: np.ndarray
    context: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return int(self.offsets.size - 1)

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __getitem__(self, k: int) -> Microbatch:
        s = slice(int(self.offsets[k]), int(self.offsets[k + 1]))
        return Microbatch(self.designation, self.focus[s], self.context[s])

    def __iter__(self) -> Iterator[Microbatch]:
        for k in range(len(self)):
            yield self[k]


# ---------------------------------------------------------------------------
# independent (IND) microbatches

def ind_draw(kappa: AssociationMatrix, rng: np.random.Generator,
             designation: Designation = Designation.FOCUS) -> Microbatch:
    """Singleton microbatch {(i, j)} with probability kappa_ij / ||kappa||_1."""
    e = kappa.entry_sampler.sample(rng)
    return Microbatch(designation, kappa.rows[e:e + 1].copy(), kappa.cols[e:e + 1].copy())


def ind_draw_batch(kappa: AssociationMatrix, n: int, rng: np.random.Generator,
                   designation: Designation = Designation.FOCUS) -> MicrobatchBatch:
    e = kappa.entry_sampler.sample(rng, n)
    return MicrobatchBatch(designation, kappa.rows[e], kappa.cols[e],
                           np.arange(n + 1, dtype=np.int64))


# ---------------------------------------------------------------------------
# coordinated (COO) microbatches

def _coo_parts(kappa: AssociationMatrix, designation: Designation):
    if designation is Designation.FOCUS:
        return kappa.by_col, kappa.col_max_sampler
    return kappa.by_row, kappa.row_max_sampler


def coo_draw(kappa: AssociationMatrix, designation: Designation,
             rng: np.random.Generator) -> Microbatch:
    """One coordinated microbatch.

    Focus designation: pick column j with probability M_j / sum_h M_h,
    u ~ U(0, 1], and return every (i, j) with kappa_ij >= u * M_j.
    Context designation is the same on rows.
    """
    index, sampler = _coo_parts(kappa, designation)
    g = sampler.sample(rng)
    u = uniform_open_closed(rng)
    members = index.at_least(g, u * index.maxima[g]).copy()
    anchor = np.full(members.size, g, dtype=np.int64)
    if designation is Designation.FOCUS:
        return Microbatch(designation, members, anchor)
    return Microbatch(designation, anchor, members)


def coo_draw_batch(kappa: AssociationMatrix, designation: Designation, n: int,
                   rng: np.random.Generator) -> MicrobatchBatch:
    """``n`` independent coordinated microbatches, drawn in vectorized form."""
    index, sampler = _coo_parts(kappa, designation)
    groups = sampler.sample(rng, n)
    u = uniform_open_closed(rng, n)
    counts = index.counts_at_least(groups, u * index.maxima[groups])
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    starts = index.ptr[groups]
    flat = np.repeat(starts - offsets[:-1], counts) + np.arange(offsets[-1])
    members = index.members[flat]
    anchors = np.repeat(groups, counts)
    if designation is Designation.FOCUS:
        return MicrobatchBatch(designation, members, anchors, offsets)
    return MicrobatchBatch(designation, anchors, members, offsets)


# ---------------------------------------------------------------------------
# streams

class MicrobatchStream:
    """Infinite i.i.d. sequence of microbatches of one designation."""

    designation: Designation

    def draw(self) -> Microbatch:
        raise NotImplementedError

    def __iter__(self):
        while True:
            yield self.draw()

    def take(self, b: int) -> tuple[np.ndarray, np.ndarray, int]:
        """Accumulate whole microbatches until at least ``b`` positives.

        Returns (focus ids, context ids, number of microbatches used).
        """
        fs, cs, total, count = [], [], 0, 0
        while total < b:
            mb = self.draw()
            fs.append(mb.focus)
            cs.append(mb.context)
            total += len(mb)
            count += 1
        if count == 1:
            return fs[0], cs[0], 1
        return np.concatenate(fs), np.concatenate(cs), count


class IndStream(MicrobatchStream):
    """Singleton microbatches drawn proportionally to weights.

    By default the examples are the entries of ``kappa``.  Passing
    explicit ``focus``/``context``/``weights`` arrays samples from that
    example multiset instead.
    """

    def __init__(self, kappa: AssociationMatrix | None, rng: np.random.Generator,
                 designation: Designation = Designation.FOCUS, *, focus=None, context=None,
                 weights=None, chunk: int = 8192):
        if kappa is not None:
            self._focus, self._context = kappa.rows, kappa.cols
            self._sampler = kappa.entry_sampler
        else:
            self._focus = np.asarray(focus, dtype=np.int64)
            self._context = np.asarray(context, dtype=np.int64)
            w = np.ones(self._focus.size) if weights is None else weights
            self._sampler = AliasTable(w)
        self.designation = designation
        self.rng = rng
        self.chunk = chunk
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _ensure(self, k: int):
        if self._buf.size - self._pos < k:
            fresh = self._sampler.sample(self.rng, max(self.chunk, k))
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0

    def draw(self) -> Microbatch:
        self._ensure(1)
        e = self._buf[self._pos:self._pos + 1]
        self._pos += 1
        return Microbatch(self.designation, self._focus[e], self._context[e])

    def take(self, b: int):
        # b singleton microbatches reach |P| >= b exactly
        self._ensure(b)
        e = self._buf[self._pos:self._pos + b]
        self._pos += b
        return self._focus[e], self._context[e], b


class CooStream(MicrobatchStream):
    def __init__(self, kappa: AssociationMatrix, designation: Designation,
                 rng: np.random.Generator, chunk: int = 1024):
        self.kappa = kappa
        self.designation = designation
        self.rng = rng
        self.chunk = chunk
        self._batch: MicrobatchBatch | None = None
        self._k = 0

    def draw(self) -> Microbatch:
        if self._batch is None or self._k >= len(self._batch):
            self._batch = coo_draw_batch(self.kappa, self.designation, self.chunk, self.rng)
            self._k = 0
        mb = self._batch[self._k]
        self._k += 1
        return mb


class RefinedStream(MicrobatchStream):
    """Splits each microbatch of ``base`` and emits the parts.

    Parts of one draw are emitted consecutively, in random order, before
    the next base draw.
    """

    def __init__(self, base: MicrobatchStream,
                 refiner: Callable[[Microbatch], list[Microbatch]],
                 rng: np.random.Generator, shuffle: bool = True):
        self.base = base
        self.refiner = refiner
        self.rng = rng
        self.shuffle = shuffle
        self.designation = base.designation
        self._queue: deque[Microbatch] = deque()

    def draw(self) -> Microbatch:
        while not self._queue:
            parts = self.refiner(self.base.draw())
            if self.shuffle and len(parts) > 1:
                parts = [parts[k] for k in self.rng.permutation(len(parts))]
            self._queue.extend(parts)
        return self._queue.popleft()


# ---------------------------------------------------------------------------
# minibatches

@dataclass(frozen=True)
class Minibatch:
    designation: Designation
    focus: np.ndarray     # positives, focus side
    context: np.ndarray   # positives, context side
    negatives: np.ndarray  # shared negative entities (C' or F'), length lam
    n_microbatches: int = 1

    @property
    def n_positives(self) -> int:
        return int(self.focus.size)

    @property
    def n_negative_pairs(self) -> int:
        return int(self.focus.size * self.negatives.size)

    def negative_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Every positive paired with every negative entity on the designated side."""
        lam = self.negatives.size
        if self.designation is Designation.FOCUS:
            return np.repeat(self.focus, lam), np.tile(self.negatives, self.focus.size)
        return np.tile(self.negatives, self.context.size), np.repeat(self.context, lam)


def negative_sampler(kappa: AssociationMatrix, designation: Designation) -> AliasTable:
    """Focus minibatches draw contexts by column sums; context ones draw rows by row sums."""
    if designation is Designation.FOCUS:
        return kappa.col_sum_sampler
    return kappa.row_sum_sampler


def build_minibatch(source: MicrobatchStream | Iterable[Microbatch], kappa: AssociationMatrix,
                    b: int, lam: int, designation: Designation,
                    rng: np.random.Generator) -> Minibatch:
    if b < 1 or lam < 0:
        raise ValueError("need b >= 1 and lam >= 0")
    if isinstance(source, MicrobatchStream):
        if source.designation is not designation:
            raise ValueError("stream designation does not match the minibatch designation")
        focus, context, count = source.take(b)
    else:
        fs, cs, total, count = [], [], 0, 0
        it = iter(source)
        while total < b:
            mb = next(it)
            fs.append(mb.focus)
            cs.append(mb.context)
            total += len(mb)
            count += 1
        focus, context = np.concatenate(fs), np.concatenate(cs)
    if lam:
        negatives = np.asarray(negative_sampler(kappa, designation).sample(rng, lam),
                               dtype=np.int64)
    else:
        negatives = np.empty(0, dtype=np.int64)
    return Minibatch(designation, focus, context, negatives, count)
