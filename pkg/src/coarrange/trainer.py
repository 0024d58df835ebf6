"""One-sided SGNS training over arranged minibatches."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .arrangement import (CooStream, Designation, IndStream, Minibatch, MicrobatchStream,
                          RefinedStream, build_minibatch)
from .data import AssociationMatrix, TestSplit
from .errors import ConfigError, ParseError
from .lsh import LshPool, RefineStats, adaptive_refine, build_pool, oracle_refine, refine
from .metrics import MetricSample, SplitEvaluator, Trajectory
from .sampling import derive_rng
from .schedule import ArrangementSchedule, Counters, Distribution, schedule_next


@dataclass
class EmbeddingModel:
    focus: np.ndarray
    context: np.ndarray
    bias: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return int(self.focus.shape[1])

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.focus.copy(), self.context.copy(),
                              None if self.bias is None else self.bias.copy())


def init_model(n_focus: int, n_context: int, d: int, seed: int, bias: bool = True,
               dtype=np.float32) -> EmbeddingModel:
    """Entries i.i.d. uniform on [-0.5/d, 0.5/d]; biases start at zero."""
    if n_focus < 1 or n_context < 1 or d < 1:
        raise ValueError("table sizes and dimension must be positive")
    rng = np.random.default_rng(seed)
    half = 0.5 / d
    focus = rng.uniform(-half, half, size=(n_focus, d)).astype(dtype)
    context = rng.uniform(-half, half, size=(n_context, d)).astype(dtype)
    return EmbeddingModel(focus, context, np.zeros(n_context, dtype=dtype) if bias else None)


def score(f, c, beta: float = 0.0) -> float:
    f = np.asarray(f, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if f.shape != c.shape:
        raise ValueError("vectors must have equal dimension")
    return float(np.dot(f, c) + beta)


def loss_terms(s, kind: str):
    """(loss, dloss/ds) of a positive or negative SGNS term at score ``s``.

    positive: -log sigma(s), derivative -sigma(-s)
    negative: -log sigma(-s), derivative sigma(s)
    """
    s = np.asarray(s, dtype=np.float64)
    if kind == "positive":
        loss, grad = np.logaddexp(0.0, -s), -expit(-s)
    elif kind == "negative":
        loss, grad = np.logaddexp(0.0, s), expit(s)
    else:
        raise ValueError(f"kind must be 'positive' or 'negative', not {kind!r}")
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass
class UpdateSummary:
    positives: int
    negatives: int

    @property
    def updates(self) -> int:
        return self.positives + self.negatives


def _accumulate(ids: np.ndarray, grads: np.ndarray):
    """Sum gradient rows per entity; ids must already be sorted."""
    uniq, starts = np.unique(ids, return_index=True)
    return uniq, np.add.reduceat(grads, starts, axis=0)


def apply_minibatch(model: EmbeddingModel, mb: Minibatch, lr: float) -> UpdateSummary:
    """Gradient step for one designated minibatch.

    All gradients use the parameters as they were before the minibatch
    and are summed per entity in ascending (entity, partner) order, so
    the result does not depend on the order of the positives.
    """
    use_bias = model.bias is not None
    F, C = model.focus, model.context
    if F.shape[1] != C.shape[1]:
        raise ValueError("focus and context tables have different dimensions")
    lam = mb.negatives.size

    if mb.designation is Designation.FOCUS:
        order = np.lexsort((mb.context, mb.focus))
        upd, partner = mb.focus[order], mb.context[order]
        own = F[upd].astype(np.float64)
        other = C[partner].astype(np.float64)
        neg_vecs = C[mb.negatives].astype(np.float64)
        pos_bias = model.bias[partner].astype(np.float64) if use_bias else 0.0
        neg_bias = model.bias[mb.negatives].astype(np.float64) if use_bias else 0.0
    else:
        order = np.lexsort((mb.focus, mb.context))
        upd, partner = mb.context[order], mb.focus[order]
        own = C[upd].astype(np.float64)
        other = F[partner].astype(np.float64)
        neg_vecs = F[mb.negatives].astype(np.float64)
        pos_bias = model.bias[upd].astype(np.float64) if use_bias else 0.0
        neg_bias = pos_bias

    s_pos = np.einsum("ij,ij->i", own, other) + pos_bias
    g_pos = -expit(-s_pos)
    grad = g_pos[:, None] * other
    g_bias = g_pos
    if lam:
        s_neg = own @ neg_vecs.T
        if use_bias:
            s_neg = s_neg + (neg_bias[None, :] if mb.designation is Designation.FOCUS
                             else neg_bias[:, None])
        g_neg = expit(s_neg)
        grad = grad + g_neg @ neg_vecs
        g_bias = g_pos + g_neg.sum(axis=1)

    uniq, total = _accumulate(upd, grad)
    table = F if mb.designation is Designation.FOCUS else C
    table[uniq] = (table[uniq].astype(np.float64) - lr * total).astype(table.dtype)
    if use_bias and mb.designation is Designation.CONTEXT:
        _, bsum = _accumulate(upd, g_bias[:, None])
        model.bias[uniq] = (model.bias[uniq].astype(np.float64) - lr * bsum[:, 0]).astype(
            model.bias.dtype)
    return UpdateSummary(mb.n_positives, mb.n_positives * lam)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    dim: int = 50
    batch: int = 64
    neg: int = 10
    lr: float = 0.02
    bias: bool = True
    seed: int = 0
    schedule: ArrangementSchedule = field(
        default_factory=lambda: ArrangementSchedule.constant("ind"))
    budget: int = 1_000_000
    eval_every: int | None = None  # default: 2% of the budget
    dtype: str = "float32"
    lsh_pool_size: int = 32
    refine_cap: int | None = None  # default: the minibatch size
    shuffle_parts: bool = True
    timing: bool = False

    def __post_init__(self):
        if self.dim < 1 or self.batch < 1 or self.neg < 0 or not self.lr > 0:
            raise ConfigError("need dim >= 1, batch >= 1, neg >= 0 and lr > 0")
        if self.budget < 0:
            raise ConfigError("budget must be nonnegative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if isinstance(self.schedule, str):
            self.schedule = ArrangementSchedule.parse(self.schedule)

    @property
    def cadence(self) -> int:
        if self.eval_every:
            return int(self.eval_every)
        return max(1, self.budget // 50)


class StreamFactory:
    """Builds (and caches) the microbatch stream for each distribution and designation."""

    def __init__(self, kappa: AssociationMatrix, config: TrainConfig, *, block_labels=None,
                 coarse=None, pools=None):
        self.kappa = kappa
        self.config = config
        self.block_labels = block_labels
        self.coarse = coarse or {}
        self.pools: dict[tuple[str, Designation], LshPool] = dict(pools or {})
        self.refine_stats = RefineStats()
        self._streams: dict[tuple[Distribution, Designation], MicrobatchStream] = {}

    def _rng(self, *names) -> np.random.Generator:
        return derive_rng(self.config.seed, "arrangement", *names)

    def pool(self, kind: str, designation: Designation) -> LshPool:
        key = (kind, designation)
        if key not in self.pools:
            rng = derive_rng(self.config.seed, "lsh-pool", kind, designation.value)
            coarse = self.coarse.get(designation)
            if kind == "angular" and coarse is None:
                raise ConfigError("angular LSH needs a coarse embedding")
            self.pools[key] = build_pool(kind, designation, self.config.lsh_pool_size, rng,
                                         kappa=self.kappa, coarse=coarse)
        return self.pools[key]

    def get(self, dist: Distribution, designation: Designation) -> MicrobatchStream:
        key = (dist, designation)
        if key in self._streams:
            return self._streams[key]
        name = (str(dist), designation.value)
        if dist.kind == "ind":
            stream = IndStream(self.kappa, self._rng(*name), designation)
        else:
            base = CooStream(self.kappa, designation, self._rng(*name, "base"))
            rng = self._rng(*name, "refine")
            if dist.kind == "coo":
                stream = base
            elif dist.kind == "coo+optlsh":
                if self.block_labels is None:
                    raise ConfigError("coo+optlsh needs block labels")
                labels = self.block_labels
                stream = RefinedStream(base, lambda mb: oracle_refine(mb, labels), rng,
                                       self.config.shuffle_parts)
            else:
                pool = self.pool(dist.lsh, designation)
                if dist.n_maps is None:
                    cap = self.config.refine_cap or self.config.batch
                    stats = self.refine_stats

                    def refiner(mb, pool=pool, cap=cap, rng=rng):
                        return adaptive_refine(mb, pool.maps, cap, rng, stats)
                else:
                    n_maps = min(dist.n_maps, len(pool))

                    def refiner(mb, pool=pool, n_maps=n_maps, rng=rng):
                        pick = rng.choice(len(pool), size=n_maps, replace=False)
                        return refine(mb, [pool.maps[k] for k in pick])
                stream = RefinedStream(base, refiner, rng, self.config.shuffle_parts)
        self._streams[key] = stream
        return stream


def train(data, config: TrainConfig, evaluator=None, *, streams=None, block_labels=None,
          coarse=None, pools=None, meta=None) -> Trajectory:
    """Train from scratch and return the metric trajectory.

    ``data`` is an :class:`AssociationMatrix` (then ``evaluator`` is
    required) or a :class:`TestSplit`, whose held-out pairs are used for
    evaluation by default.  ``streams`` maps designations to fixed
    microbatch streams and overrides the schedule.  The final model is
    available as ``trajectory.model``.
    """
    if isinstance(data, TestSplit):
        kappa = data.train
        if evaluator is None:
            evaluator = SplitEvaluator(data, seed=config.seed)
    else:
        kappa = data
    if evaluator is None:
        raise ConfigError("an evaluator is required when training on a bare matrix")

    dtype = np.float32 if config.dtype == "float32" else np.float64
    init_seed = int(derive_rng(config.seed, "init").integers(2**63))
    model = init_model(kappa.n_focus, kappa.n_context, config.dim, init_seed, config.bias, dtype)
    neg_rng = derive_rng(config.seed, "negatives")
    factory = StreamFactory(kappa, config, block_labels=block_labels, coarse=coarse, pools=pools)

    traj = Trajectory(meta=dict(meta or {}))
    traj.meta.setdefault("seed", str(config.seed))
    start = time.perf_counter()

    def record(updates):
        gap, prec = evaluator(model)
        wall = time.perf_counter() - start if config.timing else None
        traj.append(MetricSample(updates, gap, prec, wall))

    state = Counters()
    record(0)
    cadence = config.cadence
    next_eval = cadence
    while state.updates < config.budget:
        dist, designation = schedule_next(config.schedule, state)
        source = streams[designation] if streams is not None else factory.get(dist, designation)
        mb = build_minibatch(source, kappa, config.batch, config.neg, designation, neg_rng)
        summary = apply_minibatch(model, mb, config.lr)
        state.updates += summary.updates
        state.minibatches += 1
        if designation is Designation.FOCUS:
            state.focus_positives += summary.positives
        else:
            state.context_positives += summary.positives
        if state.updates >= next_eval:
            record(state.updates)
            while next_eval <= state.updates:
                next_eval += cadence
    if traj.samples[-1].update_count != state.updates:
        record(state.updates)
    traj.model = model
    traj.counters = state
    traj.refine_stats = factory.refine_stats
    return traj


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"SGNSCKP1"


def save_checkpoint(model: EmbeddingModel, path) -> None:
    """Little-endian header (n_focus, n_context, d, bias flag) then float32 tables."""
    n_f, d = model.focus.shape
    n_c = model.context.shape[0]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<iiii", n_f, n_c, d, int(model.bias is not None)))
        fh.write(np.ascontiguousarray(model.focus, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.context, dtype="<f4").tobytes())
        if model.bias is not None:
            fh.write(np.ascontiguousarray(model.bias, dtype="<f4").tobytes())


def load_checkpoint(path) -> EmbeddingModel:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ParseError("not a checkpoint file", None, str(path))
    n_f, n_c, d, has_bias = struct.unpack("<iiii", raw[8:24])
    expect = 24 + 4 * (n_f * d + n_c * d + (n_c if has_bias else 0))
    if len(raw) != expect:
        raise ParseError(f"checkpoint size {len(raw)} != expected {expect}", None, str(path))
    off = 24
    focus = np.frombuffer(raw, "<f4", n_f * d, off).reshape(n_f, d).astype(np.float32)
    off += 4 * n_f * d
    context = np.frombuffer(raw, "<f4", n_c * d, off).reshape(n_c, d).astype(np.float32)
    off += 4 * n_c * d
    bias = np.frombuffer(raw, "<f4", n_c, off).astype(np.float32) if has_bias else None
    return EmbeddingModel(focus, context, bias)
