"""Rank agreement between proxy-trained and full-data-trained configurations."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .trainer import DivergenceError, RunConfig, RunMode, ScheduleMode, run_asp

log = logging.getLogger(__name__)

# label smoothing, learning rate, augmentation probability, SGD momentum
DEFAULT_LATTICE = {
    "label_smoothing": (0.0, 0.1),
    "learning_rate": (0.05, 0.1, 0.2),
    "augment_prob": (0.25, 0.5, 0.75),
    "momentum": (0.8, 0.9),
}


class DegenerateInputError(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DegenerateInputError(f"inputs must be 1-D of equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise DegenerateInputError("need at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DegenerateInputError("inputs must be finite")
    return a, b


def _tie_pairs(sorted_values):
    """Number of tied pairs in an already sorted array."""
    _, counts = np.unique(sorted_values, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _count_inversions(y):
    """Inversions (strict) of ``y`` by bottom-up merge sort."""
    y = list(y)
    n = len(y)
    swaps = 0
    width = 1
    buf = [0.0] * n
    while width < n:
        for lo in range(0, n, 2 * width):
            mid, hi = min(lo + width, n), min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if y[j] < y[i]:
                    buf[k] = y[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = y[i]
                    i += 1
                k += 1
            buf[k:hi] = y[i:mid] + y[j:hi]
        y, buf = buf, y
        width *= 2
    return swaps


def kendall_tau(a, b):
    """Tie-corrected Kendall tau-b, O(n log n) (Knight's algorithm)."""
    a, b = _pair(a, b)
    n = a.size
    order = np.lexsort((b, a))
    xs, ys = a[order], b[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(b)
    # pairs tied in both a and b
    n3 = 0
    start = 0
    for end in range(1, n + 1):
        if end == n or xs[end] != xs[start]:
            n3 += _tie_pairs(ys[start:end])
            start = end
    swaps = _count_inversions(ys)
    if n0 == n1 or n0 == n2:
        raise DegenerateInputError("kendall tau undefined for a constant input")
    s = n0 - n1 - n2 + n3 - 2 * swaps
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def pearson(a, b):
    a, b = _pair(a, b)
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise DegenerateInputError("pearson correlation undefined for zero variance")
    return float(np.clip((da @ db) / math.sqrt(saa * sbb), -1.0, 1.0))


def midranks(a):
    """1-based ranks with ties given their average rank."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sa = a[order]
    start = 0
    for end in range(1, a.size + 1):
        if end == a.size or sa[end] != sa[start]:
            ranks[order[start:end]] = (start + end + 1) / 2
            start = end
    return ranks


def spearman(a, b):
    """Pearson correlation of mid-ranks, evaluated in exact integer arithmetic."""
    a, b = _pair(a, b)
    n = a.size
    # doubled mid-ranks are integers
    ra = [int(round(2 * r)) for r in midranks(a)]
    rb = [int(round(2 * r)) for r in midranks(b)]
    sa, sb = sum(ra), sum(rb)
    sab = n * sum(x * y for x, y in zip(ra, rb)) - sa * sb
    saa = n * sum(x * x for x in ra) - sa * sa
    sbb = n * sum(y * y for y in rb) - sb * sb
    if saa == 0 or sbb == 0:
        raise DegenerateInputError("spearman correlation undefined for a constant input")
    return sab / math.sqrt(saa * sbb)


def lattice_configs(base, lattice=None):
    """Expand ``base`` over the cartesian product of hyper-parameter values."""
    lattice = DEFAULT_LATTICE if lattice is None else lattice
    names = list(lattice)
    return [
        base.with_hyper(**dict(zip(names, values)))
        for values in itertools.product(*(lattice[k] for k in names))
    ]


def config_hash(config):
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cell_config(config, ratio, seed):
    """Concrete run for one grid cell; ratio 1.0 means a full-data run."""
    if ratio >= 1.0:
        return config.replace(mode=RunMode.FULL, ratio=1.0, seed=seed)
    return config.replace(mode=RunMode.ASP, schedule=ScheduleMode.DYNAMIC, ratio=ratio, seed=seed)


def _run_cell(config):
    try:
        log_ = run_asp(config)
        return {"test_accuracy": log_.final["test_accuracy"], "error": None}
    except DivergenceError as exc:
        return {"test_accuracy": None, "error": str(exc)}


@dataclass
class GridResult:
    """Seed-averaged final test accuracy per (ratio, config)."""

    configs: list
    ratios: list
    seeds: list
    accuracy: dict = field(default_factory=dict)  # ratio -> list aligned with configs (None = failed)
    failures: list = field(default_factory=list)

    def config_ids(self):
        return [config_hash(c) for c in self.configs]

    def to_rows(self):
        rows = []
        for r in self.ratios:
            for cid, c, acc in zip(self.config_ids(), self.configs, self.accuracy[r]):
                h = c.hyper
                rows.append({
                    "ratio": r, "config_id": cid, "label_smoothing": h.label_smoothing,
                    "learning_rate": h.learning_rate, "augment_prob": h.augment_prob,
                    "momentum": h.momentum, "test_accuracy": "" if acc is None else repr(acc),
                })
        return rows

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = self.to_rows()
        with open(out / "grid.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        with open(out / "grid.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_dict(self):
        return {
            "configs": [c.to_dict() for c in self.configs],
            "ratios": self.ratios,
            "seeds": self.seeds,
            "accuracy": {repr(r): v for r, v in self.accuracy.items()},
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            configs=[RunConfig.from_dict(c) for c in d["configs"]],
            ratios=[float(r) for r in d["ratios"]],
            seeds=list(d["seeds"]),
            accuracy={float(r): v for r, v in d["accuracy"].items()},
            failures=list(d.get("failures", [])),
        )

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def run_grid(base, lattice=None, ratios=(0.1, 0.5), seeds=(0, 1, 2), cache_dir=None, workers=1):
    """Train every (config, ratio, seed) cell and average accuracies over seeds.

    Ratio 1.0 is always added as the reference. With ``cache_dir`` each
    finished cell is stored as ``<cache_dir>/<hash>.json`` and reused on the
    next call, so an interrupted grid resumes where it stopped. ``workers >
    1`` fans cells out to processes; results are merged by cell hash, so the
    outcome does not depend on scheduling.
    """
    configs = lattice_configs(base, lattice)
    ratios = sorted(set(float(r) for r in ratios) | {1.0})
    seeds = [int(s) for s in seeds]
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)

    cells = {}
    for c in configs:
        for r in ratios:
            for s in seeds:
                cfg = cell_config(c, r, s)
                cells[config_hash(cfg)] = cfg

    results = {}
    pending = []
    for key, cfg in cells.items():
        path = cache / f"{key}.json" if cache is not None else None
        if path is not None and path.exists():
            with open(path) as fh:
                results[key] = json.load(fh)["result"]
        else:
            pending.append(key)

    def store(key, res):
        results[key] = res
        if cache is not None:
            tmp = cache / f"{key}.json.tmp"
            with open(tmp, "w") as fh:
                json.dump({"config": cells[key].to_dict(), "result": res}, fh, sort_keys=True)
            tmp.replace(cache / f"{key}.json")

    log.info("grid: %d cells, %d cached, %d to run", len(cells), len(cells) - len(pending), len(pending))
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, res in zip(pending, pool.map(_run_cell, [cells[k] for k in pending])):
                store(key, res)
    else:
        for key in pending:
            store(key, _run_cell(cells[key]))

    grid = GridResult(configs=configs, ratios=ratios, seeds=seeds)
    for r in ratios:
        row = []
        for c in configs:
            accs, failed = [], False
            for s in seeds:
                key = config_hash(cell_config(c, r, s))
                res = results[key]
                if res["error"] is not None:
                    failed = True
                    grid.failures.append({"ratio": r, "seed": s, "config_id": config_hash(c), "error": res["error"]})
                else:
                    accs.append(res["test_accuracy"])
            row.append(None if failed else float(np.mean(accs)))
        grid.accuracy[r] = row
    return grid


@dataclass
class CorrelationRow:
    ratio: float
    metric: str
    tau: float | None
    rho: float | None
    s: float | None
    note: str = ""


def correlate(result, metric=None):
    """Kendall, Pearson and Spearman coefficients of each ratio against ratio 1.0.

    Configs that failed at either ratio are dropped pairwise; a coefficient
    that cannot be computed is ``None`` with the reason in ``note``.
    """
    if len(result.configs) < 2:
        raise DegenerateInputError("need at least two configurations")
    if metric is None:
        metric = result.configs[0].metric
    ref = result.accuracy[1.0]
    rows = []
    for r in result.ratios:
        pairs = [(a, b) for a, b in zip(result.accuracy[r], ref) if a is not None and b is not None]
        note = []
        if len(pairs) < len(ref):
            note.append(f"{len(ref) - len(pairs)} failed configs dropped")
        coeffs = []
        for fn in (kendall_tau, pearson, spearman):
            try:
                a, b = zip(*pairs) if pairs else ((), ())
                coeffs.append(fn(a, b))
            except DegenerateInputError as exc:
                coeffs.append(None)
                note.append(f"{fn.__name__}: {exc}")
        rows.append(CorrelationRow(r, metric, *coeffs, note="; ".join(note)))
    return rows


def write_correlations(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = lambda v: "" if v is None else repr(v)
    with open(out / "correlation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ratio", "metric", "kendall_tau", "pearson", "spearman", "note"])
        for row in rows:
            w.writerow([row.ratio, row.metric, fmt(row.tau), fmt(row.rho), fmt(row.s), row.note])
    with open(out / "correlation.json", "w") as fh:
        json.dump([row.__dict__ for row in rows], fh, indent=2, sort_keys=True)
        fh.write("\n")
