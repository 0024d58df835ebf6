"""Low-level random sampling kernels shared by the arrangement code."""

from __future__ import annotations

import hashlib

import numpy as np


class AliasTable:
    """Vose alias table over a fixed nonnegative weight vector.

    Construction is O(n); each draw costs one integer and one uniform.
    Probabilities are exact up to floating point rounding of the
    normalized weights.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        n = w.size
        scaled = (w / total * n).tolist()
        prob = [1.0] * n
        alias = list(range(n))
        small = [i for i, x in enumerate(scaled) if x < 1.0]
        large = [i for i, x in enumerate(scaled) if x >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        self.n = n
        self.prob = np.asarray(prob)
        self.alias = np.asarray(alias, dtype=np.int64)
        self.weights = w

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            i = int(rng.integers(self.n))
            return i if rng.random() < self.prob[i] else int(self.alias[i])
        idx = rng.integers(self.n, size=size)
        coin = rng.random(size=size)
        return np.where(coin < self.prob[idx], idx, self.alias[idx])

    def probabilities(self) -> np.ndarray:
        """Exact distribution encoded by the table (for oracles)."""
        p = self.prob / self.n
        out = p.copy()
        np.add.at(out, self.alias, (1.0 - self.prob) / self.n)
        return out


def derive_rng(seed: int, *names: str) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``.

    Streams are keyed by name so adding a consumer does not perturb
    the draws seen by the others.
    """
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for name in names:
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        words.extend(int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(words))


def uniform_open_closed(rng: np.random.Generator, size=None):
    """Uniform draws on (0, 1]."""
    return 1.0 - rng.random(size)


def segment_argmin(values: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    """Position of the first minimum inside each nonempty segment.

    ``values[ptr[k]:ptr[k+1]]`` is segment k; ties go to the earliest
    position. Empty segments get -1.
    """
    n_seg = ptr.size - 1
    out = np.full(n_seg, -1, dtype=np.int64)
    lengths = np.diff(ptr)
    nonempty = np.flatnonzero(lengths > 0)
    if nonempty.size == 0:
        return out
    starts = ptr[:-1][nonempty]
    mins = np.minimum.reduceat(values, starts)
    seg_of = np.repeat(np.arange(nonempty.size), lengths[nonempty])
    hit = np.flatnonzero(values[ptr[nonempty[0]]:ptr[nonempty[-1] + 1]] == mins[seg_of])
    hit = hit + ptr[nonempty[0]]
    # first hit per segment
    seg_hit = seg_of[hit - ptr[nonempty[0]]]
    _, first = np.unique(seg_hit, return_index=True)
    out[nonempty] = hit[first]
    return out
