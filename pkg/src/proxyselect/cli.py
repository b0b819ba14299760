"""Command-line interface: ``proxyselect <command> [flags]``.

Every command takes ``--config`` (a JSON run config), ``--seed`` and
``--out-dir``; flags override the config file. Exit codes: 0 success,
2 usage error, 3 invalid config (a JSON error naming the field goes to
stderr), 1 any other failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .data import DataFormatError
from .memory import mean_importance_report
from .model import ConfigError
from .scheduler import MetricMixture, RatioSchedule, schedule_table
from .trainer import DivergenceError, RunConfig, load_dataset, run_asp

log = logging.getLogger("proxyselect")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
METRIC_CHOICES = ["random", "gradient", "loss", "entropy", "prediction", "mixture"]


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", lambda prog: argparse.HelpFormatter(prog, width=100))
        super().__init__(*args, **kwargs)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config file")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output artifacts")

    run_flags = _Parser(add_help=False)
    run_flags.add_argument("--ratio", type=float, help="sampling ratio r in (0, 1]")
    run_flags.add_argument("--schedule", choices=["static", "dynamic"], help="ratio schedule")
    run_flags.add_argument("--metric", choices=METRIC_CHOICES, help="importance metric or the mixture")
    run_flags.add_argument("--strategy", choices=["prob", "topm"], help="selection strategy")
    run_flags.add_argument("--mode", choices=["asp", "full", "coreset"], help="training mode")
    run_flags.add_argument("--epochs", type=int, help="number of training epochs")

    parser = _Parser(prog="proxyselect", description="Dynamic proxy-set selection for training.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("generate-data", parents=[common], help="write the configured dataset as CSV",
                   description="Materialize the config's dataset as dataset.csv plus metadata.json.")

    sub.add_parser("train", parents=[common, run_flags], help="run one training job",
                   description="Train once and write run.json, run_epochs.csv, run_timing.csv, "
                               "config.json, model.npz and memory.csv.")

    p = sub.add_parser("grid", parents=[common, run_flags], help="train the hyper-parameter grid",
                       description="Train every lattice config at each ratio (plus 1.0) and correlate.")
    p.add_argument("--ratios", type=float, nargs="+", default=[0.1, 0.5], help="proxy ratios to compare")
    p.add_argument("--seeds", type=int, nargs="+", help="seeds per cell (default: seed, seed+1, seed+2)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--cache-dir", type=Path, help="cell cache directory (default: OUT_DIR/cache)")

    p = sub.add_parser("correlate", parents=[common], help="correlation table from a grid result",
                       description="Read grid.json and write correlation.csv / correlation.json.")
    p.add_argument("--grid", type=Path, required=True, help="path to grid.json")

    p = sub.add_parser("hardness", parents=[common, run_flags], help="rank samples by mean importance",
                       description="Train once, then write hardness.csv (hardest first) and traces.csv.")
    p.add_argument("--track", choices=METRIC_CHOICES[:-1], default="loss", help="metric to average")
    p.add_argument("--top-k", type=int, default=10, help="rows flagged hardest / easiest")

    p = sub.add_parser("schedule-dump", parents=[common, run_flags], help="epoch -> ratio and metric table",
                       description="Write schedule.csv: proxy size and metric probabilities per epoch.")
    p.add_argument("--n", type=int, help="dataset size (default: size of the configured train split)")
    return parser


def _load_config(args):
    raw = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    config = RunConfig.from_dict(raw)
    overrides = {}
    for flag in ("ratio", "schedule", "metric", "strategy", "mode"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = config.replace(**overrides)
    if getattr(args, "epochs", None) is not None:
        config = config.with_hyper(epochs=args.epochs)
        overrides["epochs"] = args.epochs
    return config, overrides


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate_data(args, config, overrides):
    ref = dict(config.data)
    if args.seed is not None:
        ref["seed"] = args.seed
    ds = load_dataset(ref)
    ds.save_csv(args.out_dir / "dataset.csv")
    ds.save_metadata(args.out_dir / "metadata.json")


def cmd_train(args, config, overrides):
    runlog = run_asp(config)
    runlog.write(args.out_dir, "run")
    _write_json(args.out_dir / "config.json", config.to_dict())
    _write_json(args.out_dir / "overrides.json", overrides)
    runlog.model.save(args.out_dir / "model.npz")
    runlog.memory.save_csv(args.out_dir / "memory.csv")
    print(json.dumps(runlog.final, sort_keys=True))


def cmd_grid(args, config, overrides):
    seeds = args.seeds or [config.seed + k for k in range(3)]
    cache = args.cache_dir or args.out_dir / "cache"
    grid = analysis.run_grid(config, ratios=args.ratios, seeds=seeds, cache_dir=cache, workers=args.workers)
    grid.write(args.out_dir)
    analysis.write_correlations(analysis.correlate(grid), args.out_dir)


def cmd_correlate(args, config, overrides):
    grid = analysis.GridResult.read(args.grid)
    analysis.write_correlations(analysis.correlate(grid), args.out_dir)


def cmd_hardness(args, config, overrides):
    runlog = run_asp(config, track=args.track)
    history = runlog.importance_history
    report = mean_importance_report(history)
    ds = load_dataset(config.data)
    train_ids = ds.train
    flipped = set(ds.metadata.get("flipped", []))
    labels = ds.labels[train_ids]
    n = len(train_ids)
    k = min(args.top_k, n)
    hardest, easiest = set(report.hardest(k).tolist()), set(report.easiest(k).tolist())
    with open(args.out_dir / "hardness.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "sample_id", "dataset_row", "label", "flipped", "mean_importance", "group"])
        for rank, sid in enumerate(report.ranking):
            group = "hardest" if sid in hardest else "easiest" if sid in easiest else ""
            row = int(train_ids[sid])
            w.writerow([rank, int(sid), row, int(labels[sid]), int(row in flipped),
                        repr(float(report.mean_importance[sid])), group])
    active = np.zeros_like(history, dtype=bool)
    if runlog.proxy_sets is None:
        active[:] = True
    else:
        for entry in runlog.proxy_sets:
            active[entry["epoch"], entry["ids"]] = True
    with open(args.out_dir / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "sample_id", "importance", "active"])
        for epoch in range(history.shape[0]):
            for sid in range(n):
                w.writerow([epoch, sid, repr(float(history[epoch, sid])), int(active[epoch, sid])])


def cmd_schedule_dump(args, config, overrides):
    n = args.n if args.n is not None else len(load_dataset(config.data).train)
    epochs = config.hyper.epochs
    schedule = RatioSchedule(config.schedule, config.ratio, epochs)
    mixture = MetricMixture(epochs, config.order, config.sigma)
    with open(args.out_dir / "schedule.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "ratio", "m", "p_random", "p_gradient", "p_loss", "p_entropy", "p_prediction"])
        for row in schedule_table(schedule, mixture, n):
            w.writerow([row[0], repr(row[1]), row[2], *map(repr, row[3:])])


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "grid": cmd_grid,
    "correlate": cmd_correlate,
    "hardness": cmd_hardness,
    "schedule-dump": cmd_schedule_dump,
}


def _fail(code, kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    level = LOG_LEVELS.get(os.environ.get("ASP_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config, overrides = _load_config(args)
        if args.command == "hardness" and config.mode.value == "asp":
            config = config.replace(log_proxy_sets=True)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, config, overrides)
    except ConfigError as exc:
        return _fail(3, "config", exc.message, field=exc.field)
    except (DataFormatError, DivergenceError, OSError, ValueError) as exc:
        return _fail(1, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
