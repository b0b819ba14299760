"""Turn importance values into the next epoch's proxy set."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class SelectionStrategy(str, enum.Enum):
    PROBABILISTIC = "prob"
    TOPM = "topm"


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class ProxySet:
    ids: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        ids = np.sort(np.asarray(self.ids, dtype=np.int64))
        if ids.size and np.any(np.diff(ids) == 0):
            raise ValueError("proxy set contains duplicate ids")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, sample_id):
        i = np.searchsorted(self.ids, sample_id)
        return bool(i < len(self.ids) and self.ids[i] == sample_id)


def sampling_probabilities(values):
    """Numerically stable softmax over all samples."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValueError("importance values must be finite")
    e = np.exp(v - v.max())
    return e / e.sum()


def _check_budget(m, n):
    if int(m) != m or m < 1:
        raise BudgetError(f"proxy size must be a positive integer, got {m}")
    if m > n:
        raise BudgetError(f"proxy size {m} exceeds dataset size {n}")
    return int(m)


def _weighted_without_replacement(probs, m, rng):
    # Exponential race: the m smallest E_i / p_i are distributed exactly as
    # m sequential draws renormalized after each pick.
    with np.errstate(divide="ignore"):
        keys = rng.standard_exponential(probs.size) / probs
    if m == probs.size:
        return np.arange(probs.size)
    return np.argpartition(keys, m - 1)[:m]


def select_proxy(values, m, strategy=SelectionStrategy.PROBABILISTIC, rng=None, epoch=0):
    """Pick ``m`` distinct sample ids.

    Probabilistic selection draws without duplicates from the softmax of
    ``values``; ``TOPM`` takes the largest values, breaking ties by the
    smaller id. ``rng`` is only consumed by the probabilistic strategy.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    m = _check_budget(m, n)
    strategy = SelectionStrategy(strategy)
    if m == n:
        return ProxySet(np.arange(n), epoch)
    if strategy is SelectionStrategy.TOPM:
        if not np.all(np.isfinite(v)):
            raise ValueError("importance values must be finite")
        order = np.lexsort((np.arange(n), -v))
        return ProxySet(order[:m], epoch)
    if rng is None:
        raise ValueError("probabilistic selection needs an rng")
    probs = sampling_probabilities(v)
    return ProxySet(_weighted_without_replacement(probs, m, rng), epoch)


def inclusion_frequencies(values, m, trials, rng):
    """Monte-Carlo estimate of each sample's chance of entering the proxy set."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n = len(values)
    m = _check_budget(m, n)
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(trials):
        counts[select_proxy(values, m, SelectionStrategy.PROBABILISTIC, rng).ids] += 1
    return counts / trials
