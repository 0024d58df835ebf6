"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .arrangement import Designation
from .config import ExperimentConfig, load_config, write_labels
from .data import BlocksConfig, generate_blocks, load_matrix, save_matrix
from .errors import ConfigError, DataError, ThresholdError, UndefinedKeyError
from .lsh import build_pool, load_pool, save_pool
from .metrics import Trajectory, training_gain
from .sampling import derive_rng
from .schedule import ArrangementSchedule
from .selection import (MODES, SelectionConfig, run_selection_experiment, save_selection,
                        select_examples)
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train
from .verify import SUITES, run_suite


class UsageError(Exception):
    pass


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}")


def _count(text: str) -> int:
    """Integer that also accepts scientific notation such as 2e7."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _add_model_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("training")
    g.add_argument("--dim", type=int, help="embedding dimension d")
    g.add_argument("--batch", type=int, help="minibatch size b (positives)")
    g.add_argument("--neg", type=int, help="negatives per positive (lambda)")
    g.add_argument("--lr", type=float, help="learning rate (eta)")
    g.add_argument("--bias", action=argparse.BooleanOptionalAction, default=None,
                   help="learn a per-context bias")
    g.add_argument("--budget", type=_count, help="number of gradient updates")
    g.add_argument("--eval-every", type=_count, help="updates between metric samples")
    g.add_argument("--no-precision", action="store_true", help="skip precision at k")
    d = p.add_argument_group("data")
    d.add_argument("--config", help="experiment INI file")
    d.add_argument("--matrix", help="sparse triple matrix file")
    d.add_argument("--reviews", help="user,item,score review file")
    d.add_argument("--labels", help="block label file for a matrix source")
    d.add_argument("--n", type=int, help="entities per side for generated blocks")
    d.add_argument("--blocks", type=int, help="number of blocks B")
    d.add_argument("--inblock", type=float, help="in-block probability p")
    d.add_argument("--interactions", type=_count, help="number of interactions r")
    d.add_argument("--data-seed", type=int, help="seed of the generated blocks")
    p.add_argument("--seeds", type=_seeds, help="comma-separated replication seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def _experiment(args) -> ExperimentConfig:
    """Config file (if any) overridden by command-line flags."""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = None
    sources = [s for s in ("matrix", "reviews") if getattr(args, s)]
    if len(sources) > 1:
        raise UsageError("give at most one of --matrix and --reviews")
    gen = {k: getattr(args, k) for k in ("n", "blocks", "inblock", "interactions", "data_seed")}
    kw = {}
    if sources:
        kw.update(source=sources[0], path=getattr(args, sources[0]), blocks=None)
    elif any(v is not None for v in gen.values()) or cfg is None:
        base = cfg.blocks if cfg is not None and cfg.blocks is not None else None
        vals = {
            "n": gen["n"] if gen["n"] is not None else (base.n if base else 1000),
            "B": gen["blocks"] if gen["blocks"] is not None else (base.B if base else 10),
            "r": gen["interactions"] if gen["interactions"] is not None else (base.r if base else 10**5),
            "p": gen["inblock"] if gen["inblock"] is not None else (base.p if base else 0.7),
            "seed": gen["data_seed"] if gen["data_seed"] is not None else (base.seed if base else 0),
        }
        kw.update(source="blocks", path=None, blocks=BlocksConfig(**vals))
    if args.labels:
        kw["labels_path"] = args.labels
    train_kw = {k: getattr(args, k) for k in ("dim", "batch", "neg", "lr", "bias", "budget",
                                              "eval_every") if getattr(args, k) is not None}
    base_train = cfg.train if cfg is not None else None
    if train_kw or base_train is None:
        kw["train"] = replace(base_train or TrainConfig(), **train_kw)
    if args.no_precision:
        kw["eval_precision"] = False
    if getattr(args, "method", None):
        kw["methods"] = dict(args.method)
    elif getattr(args, "schedule", None):
        kw["methods"] = {"custom": args.schedule}
    if args.seeds:
        kw["seeds"] = args.seeds
    if args.out:
        kw["out_dir"] = args.out
    if cfg is None:
        return ExperimentConfig(**kw)
    return replace(cfg, **kw)


def _method(text: str):
    name, sep, sched = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=SCHEDULE, got {text!r}")
    try:
        ArrangementSchedule.parse(sched)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return name, sched


def _load_pools(paths):
    pools = {}
    for path in paths or ():
        pool = load_pool(path)
        pools[(pool.kind, pool.axis)] = pool
    return pools


def _coarse(path):
    if not path:
        return None
    model = load_checkpoint(path)
    return {Designation.FOCUS: model.focus.astype(float),
            Designation.CONTEXT: model.context.astype(float)}


def _train_job(cfg: ExperimentConfig, method: str, seed: int, pool_paths, coarse_path) -> str:
    kappa, split, labels = cfg.load_data()
    evaluator = cfg.evaluator(split, labels)
    tc = cfg.train_config(method, seed)
    meta = {"method": method, "schedule": cfg.methods[method], "config_hash": cfg.hash(),
            "name": f"{method}_seed{seed}"}
    traj = train(split if split is not None else kappa, tc, evaluator, block_labels=labels,
                 coarse=_coarse(coarse_path), pools=_load_pools(pool_paths), meta=meta)
    out = Path(cfg.out_dir)
    traj.write_csv(out / f"{method}_seed{seed}.csv")
    save_checkpoint(traj.model, out / f"{method}_seed{seed}.ckpt")
    peak = traj.peak()
    return f"{method} seed {seed}: {traj.counters.updates} updates, peak cosine gap {peak:.4f}"


def _run_jobs(fn, jobs, n_workers):
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        futures = [ex.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    cfg = BlocksConfig(args.n, args.blocks, args.interactions, args.inblock, args.seed)
    kappa = generate_blocks(cfg)
    save_matrix(kappa, args.out)
    if args.labels:
        write_labels(cfg.labels(), args.labels)
    print(f"wrote {kappa.nnz} entries ({kappa.n_focus} x {kappa.n_context}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _experiment(args)
    cfg.check_files()
    for p in (args.pool or []) + ([args.coarse] if args.coarse else []):
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    jobs = [(cfg, m, s, args.pool, args.coarse) for m in cfg.methods for s in cfg.seeds]
    for line in _run_jobs(_train_job, jobs, args.jobs):
        print(line)
    return 0


def cmd_verify(args) -> int:
    names = list(SUITES) if not args.suites or args.suites == ["all"] else args.suites
    for name in names:
        if name not in SUITES:
            raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    ok = True
    for name in names:
        report = run_suite(name, seed=args.seed)
        print(report.format())
        ok &= report.passed
    return 0 if ok else 1


def cmd_compare(args) -> int:
    if len(args.csv) < 2:
        raise UsageError("compare needs a baseline and at least one method CSV")
    trajs = [Trajectory.read_csv(p) for p in args.csv]
    names = [Path(p).stem for p in args.csv]
    base, base_name = trajs[0], names[0]
    header = ["method"] + [f"gain@{f:g}" for f in args.fractions]
    rows = []
    for traj, name in zip(trajs[1:], names[1:]):
        cells = [name]
        for f in args.fractions:
            try:
                cells.append(f"{training_gain(base, traj, f, args.metric):.2f}")
            except ThresholdError:
                cells.append("unreached")
        rows.append(cells)
    width = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]
    print(f"baseline: {base_name} (metric {args.metric}, % fewer updates than baseline)")
    for r in [header] + rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, width)))
    if args.out:
        Path(args.out).write_text("\n".join(",".join(r) for r in [header] + rows) + "\n",
                                  encoding="utf-8")
    return 0


def _select_job(cfg: ExperimentConfig, mode: str, T: int, seed: int, save: bool) -> str:
    kappa, split, labels = cfg.load_data()
    evaluator = cfg.evaluator(split, labels)
    sel_cfg = SelectionConfig(T, mode, seed=int(derive_rng(seed, "selection").integers(2**31)))
    selection = select_examples(kappa, sel_cfg)
    tc = replace(cfg.train, seed=seed)
    traj = run_selection_experiment(kappa, sel_cfg, tc, evaluator, selection)
    traj.meta.update(config_hash=cfg.hash(), name=f"select-{mode}_seed{seed}")
    out = Path(cfg.out_dir)
    traj.write_csv(out / f"select-{mode}_T{T}_seed{seed}.csv")
    if save:
        save_selection(selection[0], kappa, out / f"select-{mode}_T{T}_seed{seed}.rows.txt")
        save_selection(selection[1], kappa, out / f"select-{mode}_T{T}_seed{seed}.cols.txt")
    return f"{mode} T={T} seed {seed}: peak cosine gap {traj.peak():.4f}"


def cmd_select(args) -> int:
    cfg = _experiment(args)
    cfg.check_files()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    modes = args.modes.split(",")
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown selection mode {m!r}; choose from {', '.join(MODES)}")
    jobs = [(cfg, m, args.T, s, args.save_selection) for m in modes for s in cfg.seeds]
    for line in _run_jobs(_select_job, jobs, args.jobs):
        print(line)
    return 0


def cmd_lsh_pool(args) -> int:
    axis = Designation(args.axis)
    rng = derive_rng(args.seed, "lsh-pool", args.kind, axis.value)
    if args.kind == "jaccard":
        if not args.matrix:
            raise UsageError("jaccard maps need --matrix")
        pool = build_pool("jaccard", axis, args.size, rng, kappa=load_matrix(args.matrix))
    else:
        if not args.coarse:
            raise UsageError("angular maps need --coarse CHECKPOINT")
        pool = build_pool("angular", axis, args.size, rng, coarse=_coarse(args.coarse)[axis])
    save_pool(pool, args.out)
    print(f"wrote {len(pool)} {args.kind} maps for the {axis.value} axis to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarrange",
                                     description="Arranged-minibatch SGNS experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a stochastic blocks matrix")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--inblock", type=float, default=0.7)
    p.add_argument("--interactions", type=_count, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", help="also write block labels here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train each method and seed, write CSV trajectories")
    _add_model_flags(p)
    p.add_argument("--schedule", help="single arrangement schedule, e.g. 'coo@0, ind@250000'")
    p.add_argument("--method", type=_method, action="append",
                   help="NAME=SCHEDULE, repeatable")
    p.add_argument("--pool", action="append", help="precomputed LSH pool file, repeatable")
    p.add_argument("--coarse", help="checkpoint whose tables drive angular LSH")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run statistical property suites")
    p.add_argument("suites", nargs="*", help=f"any of {', '.join(SUITES)} (default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="training gains of methods over a baseline CSV")
    p.add_argument("csv", nargs="+", help="baseline CSV first, then method CSVs")
    p.add_argument("--fractions", type=lambda s: [float(x) for x in s.split(",")],
                   default=[0.75, 0.95, 0.99])
    p.add_argument("--metric", choices=("cosine_gap", "precision_at_k"), default="cosine_gap")
    p.add_argument("--out", help="also write the table as CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("select", help="train on small independent/coordinated selections")
    _add_model_flags(p)
    p.add_argument("--T", type=int, default=5, help="examples kept per row and per column")
    p.add_argument("--modes", default="independent,coordinated")
    p.add_argument("--save-selection", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("lsh-pool", help="precompute a pool of LSH maps")
    p.add_argument("--kind", choices=("jaccard", "angular"), required=True)
    p.add_argument("--axis", choices=("focus", "context"), required=True)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix")
    p.add_argument("--coarse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lsh_pool)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataError, UndefinedKeyError, OSError) as exc:
        print(f"coarrange {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
