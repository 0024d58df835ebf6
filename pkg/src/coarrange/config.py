"""Experiment configuration files.

INI syntax with sections::

    [data]     source = blocks | reviews | matrix, plus source options
    [split]    fraction, negatives, seed        (reviews / matrix only)
    [train]    dim, batch, neg, lr, bias, budget, eval_every, ...
    [eval]     pairs, k, representatives, min_degree, precision
    [methods]  name = schedule                  (e.g. coo = coo@0)
    [output]   dir, seeds

The hash of the normalized config is written into every output so a
CSV can be traced back to the exact settings that produced it.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (AssociationMatrix, BlocksConfig, generate_blocks, load_matrix, load_reviews,
                   split_train_test)
from .errors import ConfigError
from .metrics import BlocksEvaluator, SplitEvaluator
from .schedule import ArrangementSchedule
from .trainer import TrainConfig

SOURCES = ("blocks", "reviews", "matrix")


@dataclass
class ExperimentConfig:
    source: str = "blocks"
    blocks: BlocksConfig | None = None
    path: str | None = None
    labels_path: str | None = None
    score_threshold: float = 3.0
    reweight: bool = False
    delimiter: str = ","
    skip_header: bool = False
    split_fraction: float = 0.2
    split_negatives: int | None = None
    split_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_pairs: int = 10_000
    eval_k: int = 10
    eval_representatives: int = 500
    eval_min_degree: int = 20
    eval_precision: bool = True
    methods: dict[str, str] = field(default_factory=lambda: {"ind": "ind@0"})
    out_dir: str = "runs"
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"data source must be one of {SOURCES}, not {self.source!r}")
        if self.source == "blocks":
            if self.blocks is None:
                raise ConfigError("blocks source needs n, B, r and p")
            if self.path is not None:
                raise ConfigError("give either a blocks generator or a file path, not both")
        elif self.path is None:
            raise ConfigError(f"{self.source} source needs a path")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for name, sched in self.methods.items():
            ArrangementSchedule.parse(sched)
            if not name or any(ch in name for ch in "/\\ "):
                raise ConfigError(f"bad method name {name!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    # -- files ---------------------------------------------------------------

    def check_files(self) -> None:
        """Every referenced input must exist at launch."""
        for p in (self.path, self.labels_path):
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"no such file: {p}")

    def to_ini(self, with_output_dir: bool = True) -> str:
        """Normalized INI text; without the output section it covers only result-bearing settings."""
        sections: dict[str, dict] = {}
        data = {"source": self.source}
        if self.blocks is not None:
            b = self.blocks
            data.update(n=b.n, B=b.B, r=b.r, p=repr(b.p), seed=b.seed)
        if self.path is not None:
            data["path"] = self.path
        if self.labels_path is not None:
            data["labels"] = self.labels_path
        if self.source == "reviews":
            data.update(score_threshold=repr(self.score_threshold), reweight=self.reweight,
                        delimiter=self.delimiter, skip_header=self.skip_header)
        sections["data"] = data
        if self.source != "blocks":
            sections["split"] = {"fraction": repr(self.split_fraction), "seed": self.split_seed}
            if self.split_negatives is not None:
                sections["split"]["negatives"] = self.split_negatives
        t = self.train
        sections["train"] = {"dim": str(t.dim), "batch": str(t.batch), "neg": str(t.neg),
                             "lr": repr(t.lr), "bias": str(t.bias), "budget": str(t.budget),
                             "eval_every": str(t.cadence), "dtype": t.dtype,
                             "lsh_pool_size": str(t.lsh_pool_size),
                             "refine_cap": str(t.refine_cap or t.batch),
                             "shuffle_parts": str(t.shuffle_parts), "timing": str(t.timing)}
        sections["eval"] = {"pairs": str(self.eval_pairs), "k": str(self.eval_k),
                            "representatives": str(self.eval_representatives),
                            "min_degree": str(self.eval_min_degree),
                            "precision": str(self.eval_precision)}
        sections["methods"] = dict(self.methods)
        sections["output"] = {"dir": self.out_dir, "seeds": ",".join(map(str, self.seeds))}
        if not with_output_dir:
            del sections["output"]
        lines = []
        for name, items in sections.items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in items.items())
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        """Digest of the settings that affect results.

        The output directory and the seed list are left out: each CSV
        carries its own seed, and runs of one sweep share the hash.
        """
        return hashlib.sha256(self.to_ini(with_output_dir=False).encode("utf-8")).hexdigest()[:16]

    # -- materialization -----------------------------------------------------

    def load_data(self):
        """(matrix, split or None, block labels or None)."""
        if self.source == "blocks":
            kappa = generate_blocks(self.blocks)
            return kappa, None, self.blocks.labels()
        if self.source == "reviews":
            kappa = load_reviews(self.path, self.score_threshold, self.reweight,
                                 delimiter=self.delimiter, skip_header=self.skip_header)
        else:
            kappa = load_matrix(self.path)
        if self.labels_path is not None:
            labels = read_labels(self.labels_path, kappa)
            return kappa, None, labels
        split = split_train_test(kappa, self.split_fraction, self.split_negatives,
                                 self.split_seed)
        return split.train, split, None

    def evaluator(self, split, labels):
        if split is not None:
            return SplitEvaluator(split, self.eval_k, self.eval_min_degree,
                                  self.eval_representatives, seed=self.split_seed,
                                  precision=self.eval_precision)
        seed = self.blocks.seed if self.blocks is not None else 0
        return BlocksEvaluator(labels, self.eval_pairs, self.eval_k, self.eval_representatives,
                               seed=seed, precision=self.eval_precision)

    def train_config(self, method: str, seed: int) -> TrainConfig:
        return replace(self.train, schedule=ArrangementSchedule.parse(self.methods[method]),
                       seed=seed)


def read_labels(path, kappa: AssociationMatrix | None = None):
    """One integer block label per line; must cover every focus entity."""
    text = Path(path).read_text(encoding="utf-8").split()
    try:
        labels = np.array([int(t) for t in text], dtype=np.int64)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if kappa is not None and labels.size != kappa.n_focus:
        raise ConfigError(f"{path}: {labels.size} labels for {kappa.n_focus} focus entities")
    return labels


def write_labels(labels, path) -> None:
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels), encoding="utf-8")


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        if conv is bool:
            return cp.getboolean(section, key)
        if conv is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


_KNOWN = {
    "data": {"source", "n", "b", "r", "p", "seed", "path", "labels", "score_threshold",
             "reweight", "delimiter", "skip_header"},
    "split": {"fraction", "negatives", "seed"},
    "train": {"dim", "batch", "neg", "lr", "bias", "budget", "eval_every", "dtype",
              "lsh_pool_size", "refine_cap", "shuffle_parts", "timing"},
    "eval": {"pairs", "k", "representatives", "min_degree", "precision"},
    "output": {"dir", "seeds"},
}


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse INI text; relative data paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None)  # keys are case-folded
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        if section == "methods":
            continue
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")

    def resolve(p):
        if p is None or base_dir is None or Path(p).is_absolute():
            return p
        return str(Path(base_dir) / p)

    source = _get(cp, "data", "source", str, "blocks")
    blocks = None
    if source == "blocks":
        try:
            blocks = BlocksConfig(_get(cp, "data", "n", int, None), _get(cp, "data", "b", int, None),
                                  _get(cp, "data", "r", int, None), _get(cp, "data", "p", float, None),
                                  _get(cp, "data", "seed", int, 0))
        except TypeError:
            raise ConfigError("blocks source needs n, B, r and p") from None
    train = TrainConfig(
        dim=_get(cp, "train", "dim", int, 50), batch=_get(cp, "train", "batch", int, 64),
        neg=_get(cp, "train", "neg", int, 10), lr=_get(cp, "train", "lr", float, 0.02),
        bias=_get(cp, "train", "bias", bool, True), budget=_get(cp, "train", "budget", int, 10**6),
        eval_every=_get(cp, "train", "eval_every", int, None),
        dtype=_get(cp, "train", "dtype", str, "float32"),
        lsh_pool_size=_get(cp, "train", "lsh_pool_size", int, 32),
        refine_cap=_get(cp, "train", "refine_cap", int, None),
        shuffle_parts=_get(cp, "train", "shuffle_parts", bool, True),
        timing=_get(cp, "train", "timing", bool, False))
    methods = dict(cp["methods"]) if cp.has_section("methods") else {"ind": "ind@0"}
    seeds_raw = _get(cp, "output", "seeds", str, "0")
    try:
        seeds = tuple(int(s) for s in seeds_raw.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"[output] seeds: cannot parse {seeds_raw!r}") from None
    return ExperimentConfig(
        source=source, blocks=blocks, path=resolve(_get(cp, "data", "path", str, None)),
        labels_path=resolve(_get(cp, "data", "labels", str, None)),
        score_threshold=_get(cp, "data", "score_threshold", float, 3.0),
        reweight=_get(cp, "data", "reweight", bool, False),
        delimiter=_get(cp, "data", "delimiter", str, ","),
        skip_header=_get(cp, "data", "skip_header", bool, False),
        split_fraction=_get(cp, "split", "fraction", float, 0.2),
        split_negatives=_get(cp, "split", "negatives", int, None),
        split_seed=_get(cp, "split", "seed", int, 0),
        train=train,
        eval_pairs=_get(cp, "eval", "pairs", int, 10_000), eval_k=_get(cp, "eval", "k", int, 10),
        eval_representatives=_get(cp, "eval", "representatives", int, 500),
        eval_min_degree=_get(cp, "eval", "min_degree", int, 20),
        eval_precision=_get(cp, "eval", "precision", bool, True),
        methods=methods, out_dir=_get(cp, "output", "dir", str, "runs"), seeds=seeds)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
