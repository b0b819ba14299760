"""Mini-batch SGD training with per-epoch proxy-set selection."""
from __future__ import annotations

import csv
import dataclasses
import enum
import functools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .memory import MetricKind, importance_vector, init_memory, record_observations
from .metrics import EpochObservations
from .model import ConfigError, Model, ModelKind, ModelSpec
from .scheduler import GROUP_ORDERS, MetricMixture, RatioSchedule, ScheduleMode, draw_metric, proxy_size
from .selector import ProxySet, SelectionStrategy, select_proxy

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e4
MIXTURE = "mixture"


class DivergenceError(RuntimeError):
    def __init__(self, epoch, loss, partial_log=None):
        super().__init__(f"training diverged at epoch {epoch} (batch loss {loss})")
        self.epoch = epoch
        self.loss = loss
        self.partial_log = partial_log


class RunMode(str, enum.Enum):
    ASP = "asp"
    FULL = "full"
    CORESET = "coreset"


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    label_smoothing: float = 0.0
    augment_prob: float = 0.0
    augment_std: float = 0.5
    batch_size: int = 64
    epochs: int = 30

    def __post_init__(self):
        checks = {
            "learning_rate": self.learning_rate >= 0,
            "momentum": 0 <= self.momentum < 1,
            "weight_decay": self.weight_decay >= 0,
            "label_smoothing": 0 <= self.label_smoothing < 1,
            "augment_prob": 0 <= self.augment_prob <= 1,
            "augment_std": self.augment_std >= 0,
            "batch_size": int(self.batch_size) == self.batch_size and self.batch_size >= 1,
            "epochs": int(self.epochs) == self.epochs and self.epochs >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ConfigError(f"hyper.{name}", f"out of range: {getattr(self, name)!r}")


_DATA_KINDS = {"synthetic", "csv", "idx"}


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one training run.

    ``data`` is a dataset reference: ``{"kind": "synthetic", ...generator
    arguments}``, ``{"kind": "csv", "path": ...}`` or ``{"kind": "idx",
    "images": ..., "labels": ...}``.
    """

    data: dict = field(default_factory=lambda: {"kind": "synthetic"})
    model: ModelKind = ModelKind.MLP
    hidden_units: int = 64
    hyper: HyperParams = field(default_factory=HyperParams)
    mode: RunMode = RunMode.ASP
    schedule: ScheduleMode = ScheduleMode.DYNAMIC
    ratio: float = 0.5
    metric: str = MIXTURE
    order: str = "g012"
    sigma: float | None = None
    strategy: SelectionStrategy = SelectionStrategy.PROBABILISTIC
    coreset_metric: MetricKind = MetricKind.LOSS
    seed: int = 0
    log_proxy_sets: bool = False

    def __post_init__(self):
        def enum_field(name, cls, path):
            try:
                object.__setattr__(self, name, cls(getattr(self, name)))
            except ValueError:
                choices = ", ".join(m.value for m in cls)
                raise ConfigError(path, f"{getattr(self, name)!r} is not one of {choices}") from None

        enum_field("model", ModelKind, "model.kind")
        enum_field("mode", RunMode, "selection.mode")
        enum_field("schedule", ScheduleMode, "selection.schedule")
        enum_field("strategy", SelectionStrategy, "selection.strategy")
        enum_field("coreset_metric", MetricKind, "selection.coreset_metric")
        if self.data.get("kind") not in _DATA_KINDS:
            raise ConfigError("data.kind", f"must be one of {sorted(_DATA_KINDS)}")
        if self.metric != MIXTURE:
            try:
                object.__setattr__(self, "metric", MetricKind.parse(self.metric).value)
            except ValueError as exc:
                raise ConfigError("selection.metric", str(exc)) from None
        if not 0 < self.ratio <= 1:
            raise ConfigError("selection.ratio", f"must be in (0, 1], got {self.ratio}")
        if self.order not in GROUP_ORDERS:
            raise ConfigError("selection.order", f"must be one of {GROUP_ORDERS}")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("selection.sigma", "must be positive")
        if self.hidden_units < 1:
            raise ConfigError("model.hidden_units", "must be >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")

    def to_dict(self):
        return {
            "data": dict(self.data),
            "model": {"kind": self.model.value, "hidden_units": self.hidden_units},
            "hyper": dataclasses.asdict(self.hyper),
            "selection": {
                "mode": self.mode.value,
                "schedule": self.schedule.value,
                "ratio": self.ratio,
                "metric": self.metric,
                "order": self.order,
                "sigma": self.sigma,
                "strategy": self.strategy.value,
                "coreset_metric": self.coreset_metric.value,
                "log_proxy_sets": self.log_proxy_sets,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        _reject_unknown("", d, {"data", "model", "hyper", "selection", "seed"})
        kwargs = {}
        if "data" in d:
            if not isinstance(d["data"], dict):
                raise ConfigError("data", "must be a mapping")
            kwargs["data"] = dict(d["data"])
        model = d.get("model", {})
        _reject_unknown("model", model, {"kind", "hidden_units"})
        if "kind" in model:
            kwargs["model"] = model["kind"]
        if "hidden_units" in model:
            kwargs["hidden_units"] = model["hidden_units"]
        hyper = d.get("hyper", {})
        names = {f.name for f in dataclasses.fields(HyperParams)}
        _reject_unknown("hyper", hyper, names)
        kwargs["hyper"] = HyperParams(**hyper)
        sel = d.get("selection", {})
        _reject_unknown("selection", sel, {"mode", "schedule", "ratio", "metric", "order", "sigma",
                                           "strategy", "coreset_metric", "log_proxy_sets"})
        kwargs.update(sel)
        if "seed" in d:
            kwargs["seed"] = d["seed"]
        return cls(**kwargs)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_hyper(self, **changes):
        return dataclasses.replace(self, hyper=dataclasses.replace(self.hyper, **changes))


def _reject_unknown(prefix, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(prefix or "<root>", "must be a mapping")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else key, "unknown key")


def load_dataset(ref):
    """Materialize a dataset reference; identical references share one instance."""
    return _load_dataset_cached(json.dumps(ref, sort_keys=True))


@functools.lru_cache(maxsize=8)
def _load_dataset_cached(key):
    ref = json.loads(key)
    kind = ref.pop("kind", None)
    required = {"synthetic": (), "csv": ("path",), "idx": ("images", "labels")}
    if kind not in required:
        raise ConfigError("data.kind", f"unknown dataset kind {kind!r}; expected synthetic, csv or idx")
    for name in required[kind]:
        if name not in ref:
            raise ConfigError(f"data.{name}", f"required for kind {kind!r}")
    try:
        if kind == "synthetic":
            if "split" in ref:
                ref["split"] = tuple(ref["split"])
            return data_mod.generate_synthetic(**ref)
        if kind == "csv":
            return data_mod.load_csv(ref.pop("path"), **ref)
        images, labels = ref.pop("images"), ref.pop("labels")
        return data_mod.load_idx(images, labels, **ref)
    except TypeError as exc:
        raise ConfigError("data", str(exc)) from None


@dataclass
class EpochRecord:
    epoch: int
    metric: str | None
    m: int
    train_loss: float
    val_accuracy: float
    test_accuracy: float
    wall_time: float = 0.0

    def deterministic(self):
        d = dataclasses.asdict(self)
        del d["wall_time"]
        return d


@dataclass
class RunLog:
    config: dict
    seeds: dict
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    proxy_sets: list | None = None
    importance_history: np.ndarray | None = field(default=None, repr=False)
    diverged: bool = False
    model: Model | None = field(default=None, repr=False, compare=False)
    memory: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        """JSON-ready record. Wall times are left out so the record is reproducible."""
        d = {
            "config": self.config,
            "seeds": self.seeds,
            "epochs": [e.deterministic() for e in self.epochs],
            "final": self.final,
            "diverged": self.diverged,
        }
        if self.proxy_sets is not None:
            d["proxy_sets"] = self.proxy_sets
        return d

    def trajectory(self):
        """Per-epoch sizes, losses and accuracies plus final metrics; no config or metric labels."""
        keep = ("epoch", "m", "train_loss", "val_accuracy", "test_accuracy")
        return {
            "epochs": [{k: getattr(e, k) for k in keep} for e in self.epochs],
            "final": self.final,
        }

    def write(self, out_dir, stem="run"):
        """Write ``<stem>.json``, ``<stem>_epochs.csv`` and ``<stem>_timing.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{stem}.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        fields = ["epoch", "metric", "m", "train_loss", "val_accuracy", "test_accuracy"]
        with open(out / f"{stem}_epochs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(fields)
            for e in self.epochs:
                w.writerow([e.epoch, e.metric or "", e.m, repr(e.train_loss), repr(e.val_accuracy),
                            repr(e.test_accuracy)])
        with open(out / f"{stem}_timing.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "wall_time"])
            for e in self.epochs:
                w.writerow([e.epoch, f"{e.wall_time:.6f}"])


def _sgd_step(model, grads, velocity, hp):
    for name, w in model.params.items():
        g = grads[name] + hp.weight_decay * w
        v = velocity.get(name)
        v = g if v is None else hp.momentum * v + g
        velocity[name] = v
        w -= hp.learning_rate * v


def train_epoch(model, x, y, proxy, hp, rng, velocity=None, epoch=0):
    """One shuffled pass over the proxy samples.

    Returns ``(model, velocity, observations, mean_batch_loss)``. ``model`` is
    a fresh copy; the momentum buffers in ``velocity`` are updated in place
    and carried across epochs. Per-sample observations come from the same
    forward pass used for that sample's gradient step.
    """
    ids = proxy.ids if isinstance(proxy, ProxySet) else np.asarray(proxy, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("proxy set is empty")
    model.check_input(x)
    model = model.copy()
    velocity = {} if velocity is None else velocity
    order = rng.permutation(ids)
    augment = rng.random(order.size) < hp.augment_prob
    noise = rng.normal(0.0, 1.0, size=(order.size, x.shape[1]))
    parts, losses = [], []
    for start in range(0, order.size, hp.batch_size):
        sl = slice(start, start + hp.batch_size)
        batch = order[sl]
        xb = x[batch]
        mask = augment[sl]
        if mask.any():
            xb = xb + np.where(mask[:, None], hp.augment_std * noise[sl], 0.0)
        yb = y[batch]
        loss, grads, probs = model.loss_and_grad(xb, yb, hp.label_smoothing)
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            raise DivergenceError(epoch, loss)
        losses.append(loss)
        parts.append(EpochObservations.from_probabilities(batch, probs, yb, hp.label_smoothing))
        _sgd_step(model, grads, velocity, hp)
    for w in model.params.values():
        if not np.all(np.isfinite(w)):
            raise DivergenceError(epoch, float("nan"))
    return model, velocity, EpochObservations.concatenate(parts), float(np.mean(losses))


def evaluate(model, x, y):
    """Argmax accuracy and mean (unsmoothed) cross-entropy on a split."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty split")
    probs = model.predict_proba(x)
    acc = float(np.mean(probs.argmax(axis=1) == y))
    loss = float(np.mean(-np.log(np.maximum(probs[np.arange(len(y)), y], 1e-12))))
    return acc, loss


def _streams(seed):
    names = ("init", "shuffle", "select", "metric", "pretrain_init", "pretrain_shuffle")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: int(child.generate_state(1, dtype=np.uint64)[0]) for name, child in zip(names, children)}


def _pretrain_memory(dataset, config, model_spec, seeds):
    """Train on all data for the full budget and return the resulting memory."""
    x, y = dataset.split("train")
    n = len(y)
    model = Model(dataclasses.replace(model_spec, init_seed=seeds["pretrain_init"]))
    rng = np.random.default_rng(seeds["pretrain_shuffle"])
    memory = init_memory(n)
    velocity = {}
    everything = ProxySet(np.arange(n))
    for epoch in range(config.hyper.epochs):
        model, velocity, obs, _ = train_epoch(model, x, y, everything, config.hyper, rng, velocity, epoch)
        record_observations(memory, epoch, obs)
    return memory


def run_asp(config, dataset=None, track=None):
    """Train once under ``config`` and return the run log.

    Epoch 0 always trains on the whole training split. After every epoch the
    observations go into the proxy memory; in ASP mode the next epoch's proxy
    set is then sized by the ratio schedule and drawn from the chosen metric.
    ``track`` names a metric whose importance vector is stored after each
    epoch in ``RunLog.importance_history``.
    """
    if dataset is None:
        dataset = load_dataset(config.data)
    hp = config.hyper
    x_tr, y_tr = dataset.split("train")
    x_val, y_val = dataset.split("val")
    x_te, y_te = dataset.split("test")
    n = len(y_tr)
    seeds = _streams(config.seed)
    spec = ModelSpec(config.model, dataset.dim, dataset.num_classes, config.hidden_units, seeds["init"])
    model = Model(spec)
    shuffle_rng = np.random.default_rng(seeds["shuffle"])
    select_rng = np.random.default_rng(seeds["select"])
    metric_rng = np.random.default_rng(seeds["metric"])
    schedule = RatioSchedule(config.schedule, config.ratio, hp.epochs)
    mixture = MetricMixture(hp.epochs, config.order, config.sigma) if config.metric == MIXTURE else None
    track = MetricKind.parse(track) if track is not None else None

    memory = init_memory(n)
    runlog = RunLog(config=config.to_dict(), seeds={"seed": config.seed, **seeds})
    if config.log_proxy_sets:
        runlog.proxy_sets = []
    history = []

    proxy, metric_used = ProxySet(np.arange(n), 0), None
    if config.mode is RunMode.CORESET:
        pre = _pretrain_memory(dataset, config, spec, seeds)
        values = importance_vector(pre, config.coreset_metric, select_rng)
        proxy = select_proxy(values, proxy_size(RatioSchedule("static", config.ratio, 1), 0, n),
                             SelectionStrategy.TOPM)
        metric_used = config.coreset_metric.value

    velocity = {}
    for epoch in range(hp.epochs):
        t0 = time.perf_counter()
        try:
            model, velocity, obs, train_loss = train_epoch(model, x_tr, y_tr, proxy, hp, shuffle_rng,
                                                           velocity, epoch)
        except DivergenceError as exc:
            runlog.diverged = True
            runlog.final = {"diverged_epoch": epoch}
            exc.partial_log = runlog
            raise
        record_observations(memory, epoch, obs)
        val_acc = evaluate(model, x_val, y_val)[0] if len(y_val) else float("nan")
        test_acc = evaluate(model, x_te, y_te)[0] if len(y_te) else float("nan")
        if runlog.proxy_sets is not None:
            runlog.proxy_sets.append({"epoch": epoch, "ids": proxy.ids.tolist()})
        if track is not None:
            history.append(importance_vector(memory, track, np.random.default_rng([seeds["select"], epoch])))
        trained_m = len(proxy)
        used = metric_used

        if config.mode is RunMode.ASP and epoch + 1 < hp.epochs:
            m = proxy_size(schedule, epoch + 1, n)
            if mixture is not None:
                kind = draw_metric(mixture, epoch + 1, metric_rng)
            else:
                kind = MetricKind(config.metric)
            values = importance_vector(memory, kind, select_rng)
            proxy = select_proxy(values, m, config.strategy, select_rng, epoch=epoch + 1)
            metric_used = kind.value

        runlog.epochs.append(EpochRecord(epoch, used, trained_m, train_loss, val_acc, test_acc,
                                         time.perf_counter() - t0))
        log.debug("epoch %d m=%d loss=%.4f val=%.4f test=%.4f", epoch, trained_m, train_loss, val_acc, test_acc)

    test_acc, test_loss = evaluate(model, x_te, y_te) if len(y_te) else (float("nan"), float("nan"))
    runlog.final = {
        "test_accuracy": test_acc,
        "test_loss": test_loss,
        "val_accuracy": runlog.epochs[-1].val_accuracy,
        "samples_seen": int(sum(e.m for e in runlog.epochs)),
    }
    if track is not None:
        runlog.importance_history = np.vstack(history)
    runlog.model = model
    runlog.memory = memory
    return runlog
