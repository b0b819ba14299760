"""Epoch-indexed schedules for the proxy-set size and the importance metric."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .memory import MetricKind

# group index -> member metrics
METRIC_GROUPS = (
    (MetricKind.RANDOM,),
    (MetricKind.PREDICTION, MetricKind.GRADIENT),
    (MetricKind.LOSS, MetricKind.ENTROPY),
)
METRIC_ORDER = (
    MetricKind.RANDOM,
    MetricKind.GRADIENT,
    MetricKind.LOSS,
    MetricKind.ENTROPY,
    MetricKind.PREDICTION,
)
GROUP_ORDERS = tuple("g" + "".join(map(str, p)) for p in itertools.permutations(range(3)))


class ScheduleMode(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


def _check_epoch(i, n_epochs):
    if int(i) != i or not 0 <= i < n_epochs:
        raise IndexError(f"epoch {i} outside [0, {n_epochs})")
    return int(i)


@dataclass(frozen=True)
class RatioSchedule:
    mode: ScheduleMode
    ratio: float
    total_epochs: int

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if int(self.total_epochs) != self.total_epochs or self.total_epochs < 1:
            raise ValueError(f"total_epochs must be a positive integer, got {self.total_epochs}")
        object.__setattr__(self, "total_epochs", int(self.total_epochs))

    def ratios(self):
        """Unrounded fraction of the training set activated at each epoch."""
        n_epochs, r = self.total_epochs, self.ratio
        if self.mode is ScheduleMode.STATIC:
            return np.full(n_epochs, r)
        if r <= 0.5:
            return np.linspace(1.0, 0.01, n_epochs) * 2 * r
        return np.linspace(1.0, 2 * r - 1, n_epochs)


def dynamic_ratio(schedule, i):
    return float(schedule.ratios()[_check_epoch(i, schedule.total_epochs)])


def proxy_size(schedule, i, n):
    """Number of samples to activate at epoch ``i`` out of ``n``."""
    if n < 1:
        raise ValueError("dataset size must be positive")
    i = _check_epoch(i, schedule.total_epochs)
    if schedule.mode is ScheduleMode.STATIC:
        m = int(round(schedule.ratio * n))
    else:
        m = int(round(schedule.ratios()[i] * n))
    return min(max(m, 1), n)


@dataclass(frozen=True)
class MetricMixture:
    """Gaussian-in-epoch weights over three metric groups.

    ``order`` names which group peaks at 1/4, 2/4 and 3/4 of training, e.g.
    ``"g021"`` puts Random first, Loss/Entropy second, Prediction/Gradient last.
    ``sigma`` defaults to ``total_epochs / 8``.
    """

    total_epochs: int
    order: str = "g012"
    sigma: float | None = field(default=None)

    def __post_init__(self):
        if self.order not in GROUP_ORDERS:
            raise ValueError(f"order must be one of {GROUP_ORDERS}, got {self.order!r}")
        if int(self.total_epochs) != self.total_epochs or self.total_epochs < 1:
            raise ValueError(f"total_epochs must be a positive integer, got {self.total_epochs}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.total_epochs / 8)
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def group_means(self):
        """Peak epoch of groups 0, 1, 2."""
        slots = [int(c) for c in self.order[1:]]
        means = [0.0, 0.0, 0.0]
        for position, group in enumerate(slots):
            means[group] = (position + 1) * self.total_epochs / 4
        return tuple(means)

    def group_probabilities(self, i):
        _check_epoch(i, self.total_epochs)
        means = np.asarray(self.group_means())
        logw = -((i - means) ** 2) / (2 * self.sigma**2)
        w = np.exp(logw - logw.max())
        return w / w.sum()


def metric_probabilities(mixture, i):
    """Probability of each metric at epoch ``i``, aligned with ``METRIC_ORDER``."""
    groups = mixture.group_probabilities(i)
    probs = np.empty(len(METRIC_ORDER))
    for g, members in enumerate(METRIC_GROUPS):
        for kind in members:
            probs[METRIC_ORDER.index(kind)] = groups[g] / len(members)
    return probs / probs.sum()


def draw_metric(mixture, i, rng):
    probs = metric_probabilities(mixture, i)
    return METRIC_ORDER[int(rng.choice(len(METRIC_ORDER), p=probs))]


def schedule_table(schedule, mixture, n):
    """Rows of ``(epoch, ratio, m, p_random, p_gradient, p_loss, p_entropy, p_prediction)``."""
    ratios = schedule.ratios()
    rows = []
    for i in range(schedule.total_epochs):
        probs = metric_probabilities(mixture, i) if mixture is not None else [np.nan] * 5
        rows.append((i, float(ratios[i]), proxy_size(schedule, i, n), *map(float, probs)))
    return rows
