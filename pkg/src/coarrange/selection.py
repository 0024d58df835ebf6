"""Small fixed example subsets chosen independently or coordinately.

Each row keeps T examples (used for focus updates) and each column keeps
T examples (used for context updates).  Both modes pick column j for row
i with probability kappa_ij / ||kappa_i.||_1; coordinated mode shares
one exponential race per repetition across all rows, so similar rows
tend to pick the same columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrangement import Designation, IndStream
from .data import AssociationMatrix, AxisIndex, read_triples
from .errors import ConfigError, DataError
from .sampling import derive_rng
from .trainer import TrainConfig, train

MODES = ("independent", "coordinated")


@dataclass(frozen=True)
class SelectionConfig:
    T: int
    mode: str = "coordinated"
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")


@dataclass
class Selected:
    """Selected examples of one designation; ``rep`` is the repetition index."""

    designation: Designation
    focus: np.ndarray
    context: np.ndarray
    rep: np.ndarray

    def __len__(self):
        return int(self.focus.size)


def _independent(index: AxisIndex, T: int, rng: np.random.Generator) -> np.ndarray:
    """Positions (into the by-id order) of T weighted draws per group."""
    out = np.empty((index.n_groups, T), dtype=np.int64)
    for g in range(index.n_groups):
        s = index.slice(g)
        cum = np.cumsum(index.weights_by_id[s])
        pick = np.searchsorted(cum, rng.random(T) * cum[-1], side="right")
        out[g] = s.start + np.minimum(pick, cum.size - 1)
    return out


def _coordinated(index: AxisIndex, n_other: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Per repetition, shared u ~ Exp(1) per member; each group takes argmax w / u."""
    nnz = index.members_by_id.size
    starts = index.ptr[:-1]
    lengths = np.diff(index.ptr)
    ar = np.arange(nnz)
    out = np.empty((index.n_groups, T), dtype=np.int64)
    chunk = max(1, 4_000_000 // max(nnz, n_other))
    for lo in range(0, T, chunk):
        R = min(chunk, T - lo)
        u = rng.exponential(size=(R, n_other))
        ratios = u[:, index.members_by_id] / index.weights_by_id
        mins = np.minimum.reduceat(ratios, starts, axis=1)
        hit = ratios == np.repeat(mins, lengths, axis=1)
        # earliest hit in each segment = smallest member id
        first = nnz - np.maximum.reduceat(np.where(hit, nnz - ar, 0), starts, axis=1)
        out[:, lo:lo + R] = first.T
    return out


def select_examples(kappa: AssociationMatrix, cfg: SelectionConfig) -> tuple[Selected, Selected]:
    """Row-designated and column-designated example multisets."""
    if np.any(kappa.by_row.degree() == 0):
        raise DataError("selection needs every row to have a positive entry")
    if np.any(kappa.by_col.degree() == 0):
        raise DataError("selection needs every column to have a positive entry")
    rng = np.random.default_rng(cfg.seed)
    result = []
    for designation, index, n_other in ((Designation.FOCUS, kappa.by_row, kappa.n_context),
                                        (Designation.CONTEXT, kappa.by_col, kappa.n_focus)):
        if cfg.mode == "independent":
            pos = _independent(index, cfg.T, rng)
        else:
            pos = _coordinated(index, n_other, cfg.T, rng)
        groups = np.repeat(np.arange(index.n_groups), cfg.T)
        members = index.members_by_id[pos.reshape(-1)]
        rep = np.tile(np.arange(cfg.T), index.n_groups)
        if designation is Designation.FOCUS:
            result.append(Selected(designation, groups, members, rep))
        else:
            result.append(Selected(designation, members, groups, rep))
    return result[0], result[1]


def save_selection(selected: Selected, kappa: AssociationMatrix, path) -> None:
    """Triple text format ``i j rep`` under a ``n_focus n_context count`` header."""
    lines = [f"# designation={selected.designation.value}",
             f"{kappa.n_focus} {kappa.n_context} {len(selected)}"]
    lines.extend(f"{i} {j} {t}" for i, j, t in zip(selected.focus.tolist(),
                                                    selected.context.tolist(),
                                                    selected.rep.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_selection(path) -> Selected:
    path = Path(path)
    first = path.open(encoding="utf-8").readline()
    designation = Designation(first.split("=", 1)[1].strip())
    _, ii, jj, reps = read_triples(path)
    return Selected(designation, ii, jj, np.array([int(r) for r in reps], dtype=np.int64))


def run_selection_experiment(kappa: AssociationMatrix, cfg: SelectionConfig,
                             train_config: TrainConfig, evaluator, selection=None):
    """Train without bias, with independent arrangement, on the selected examples only.

    Row selections feed focus minibatches and column selections feed
    context minibatches; negatives still follow the full matrix sums.
    """
    rows, cols = selection if selection is not None else select_examples(kappa, cfg)
    tc = TrainConfig(**{**train_config.__dict__, "bias": False})
    seed = tc.seed
    streams = {
        Designation.FOCUS: IndStream(None, derive_rng(seed, "selection", "focus"),
                                     Designation.FOCUS, focus=rows.focus, context=rows.context),
        Designation.CONTEXT: IndStream(None, derive_rng(seed, "selection", "context"),
                                       Designation.CONTEXT, focus=cols.focus,
                                       context=cols.context),
    }
    meta = {"selection_mode": cfg.mode, "T": str(cfg.T), "selection_seed": str(cfg.seed)}
    return train(kappa, tc, evaluator, streams=streams, meta=meta)
