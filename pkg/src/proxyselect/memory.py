"""Proxy memory: the latest importance observation of every training sample.

Samples outside the current proxy set keep their stale values. The prediction
score of a sample is an integer accumulator that moves down by one each epoch
the sample is classified correctly and up by one each epoch it is not.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import EpochObservations

NEVER = -1
SNAPSHOT_VERSION = 1


class MetricKind(str, enum.Enum):
    RANDOM = "random"
    GRADIENT = "gradient"
    LOSS = "loss"
    ENTROPY = "entropy"
    PREDICTION = "prediction"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {value!r}; expected one of {choices}") from None


class Correctness(enum.IntEnum):
    WRONG = 1
    ABSENT = 0
    CORRECT = -1


class DuplicateSampleError(ValueError):
    pass


# columns of ProxyMemory.values
_STORED = (MetricKind.LOSS, MetricKind.ENTROPY, MetricKind.GRADIENT)
_COLUMN = {kind: j for j, kind in enumerate(_STORED)}


@dataclass
class ProxyMemory:
    n: int
    values: np.ndarray = field(repr=False)
    prediction_scores: np.ndarray = field(repr=False)
    last_active_epoch: np.ndarray = field(repr=False)

    def value(self, kind, sample_id):
        kind = MetricKind.parse(kind)
        if kind is MetricKind.PREDICTION:
            return float(self.prediction_scores[sample_id])
        if kind is MetricKind.RANDOM:
            raise ValueError("the random metric has no stored value")
        return float(self.values[sample_id, _COLUMN[kind]])

    def copy(self):
        return ProxyMemory(
            self.n,
            self.values.copy(),
            self.prediction_scores.copy(),
            self.last_active_epoch.copy(),
        )

    def __eq__(self, other):
        if not isinstance(other, ProxyMemory):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.prediction_scores, other.prediction_scores)
            and np.array_equal(self.last_active_epoch, other.last_active_epoch)
        )

    def save_csv(self, path):
        """Write one row per sample; ``last_active_epoch`` is empty for never-active samples."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "loss", "entropy", "gradient", "prediction_score", "last_active_epoch"])
            for i in range(self.n):
                last = int(self.last_active_epoch[i])
                writer.writerow([
                    i,
                    repr(float(self.values[i, 0])),
                    repr(float(self.values[i, 1])),
                    repr(float(self.values[i, 2])),
                    int(self.prediction_scores[i]),
                    "" if last == NEVER else last,
                ])

    @classmethod
    def load_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        memory = init_memory(len(rows))
        for i, row in enumerate(rows):
            if int(row["sample_id"]) != i:
                raise ValueError(f"row {i + 2}: sample ids must be dense and ordered")
            memory.values[i] = [float(row["loss"]), float(row["entropy"]), float(row["gradient"])]
            memory.prediction_scores[i] = int(row["prediction_score"])
            last = row["last_active_epoch"]
            memory.last_active_epoch[i] = NEVER if last == "" else int(last)
        return memory

    def save(self, path):
        """Binary snapshot (numpy ``.npz``) carrying a format version."""
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format_version=np.int64(SNAPSHOT_VERSION),
                values=self.values,
                prediction_scores=self.prediction_scores,
                last_active_epoch=self.last_active_epoch,
            )

    @classmethod
    def load(cls, path):
        with np.load(Path(path)) as z:
            version = int(z["format_version"])
            if version != SNAPSHOT_VERSION:
                raise ValueError(f"unsupported memory snapshot version {version}")
            values = z["values"].astype(np.float64)
            return cls(len(values), values, z["prediction_scores"].astype(np.int64),
                       z["last_active_epoch"].astype(np.int64))


def init_memory(n):
    if int(n) != n or n < 1:
        raise ValueError(f"memory size must be a positive integer, got {n}")
    n = int(n)
    return ProxyMemory(
        n=n,
        values=np.zeros((n, len(_STORED)), dtype=np.float64),
        prediction_scores=np.zeros(n, dtype=np.int64),
        last_active_epoch=np.full(n, NEVER, dtype=np.int64),
    )


def _check_ids(memory, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= memory.n):
        raise IndexError(f"sample id out of range [0, {memory.n})")
    if np.unique(ids).size != ids.size:
        raise DuplicateSampleError("duplicate sample id in observations")
    return ids


def update_prediction_scores(memory, correctness):
    """Apply one epoch of prediction outcomes in place and return ``memory``.

    ``correctness`` maps sample id to ``Correctness`` (or ``True``/``False``/``None``
    for correct/wrong/absent). Samples not in the mapping count as absent.
    """
    ids = _check_ids(memory, list(correctness.keys()))
    delta = np.array([_as_correctness(c) for c in correctness.values()], dtype=np.int64)
    memory.prediction_scores[ids] += delta
    return memory


def _as_correctness(c):
    if c is None:
        return Correctness.ABSENT
    if isinstance(c, (bool, np.bool_)):
        return Correctness.CORRECT if c else Correctness.WRONG
    return Correctness(c)


def record_observations(memory, epoch, obs):
    """Overwrite the stored signals of every observed sample, in place.

    Returns ``memory`` for chaining. Unobserved samples are left untouched.
    """
    if not isinstance(obs, EpochObservations):
        raise TypeError("obs must be EpochObservations")
    ids = _check_ids(memory, obs.ids)
    memory.values[ids, _COLUMN[MetricKind.LOSS]] = obs.loss
    memory.values[ids, _COLUMN[MetricKind.ENTROPY]] = obs.entropy
    memory.values[ids, _COLUMN[MetricKind.GRADIENT]] = obs.gradient_norm
    memory.prediction_scores[ids] += np.where(obs.correct, Correctness.CORRECT, Correctness.WRONG)
    memory.last_active_epoch[ids] = int(epoch)
    return memory


def importance_vector(memory, kind, rng=None):
    """Per-sample importance under ``kind``; a fresh array of length ``n``.

    The random metric draws ``n`` new uniform(0, 1) values from ``rng`` and
    leaves the memory unchanged.
    """
    kind = MetricKind.parse(kind)
    if kind is MetricKind.RANDOM:
        if rng is None:
            raise ValueError("the random metric needs an rng")
        return rng.random(memory.n)
    if kind is MetricKind.PREDICTION:
        return memory.prediction_scores.astype(np.float64)
    return memory.values[:, _COLUMN[kind]].copy()


@dataclass(frozen=True)
class HardnessReport:
    ranking: np.ndarray
    mean_importance: np.ndarray

    def hardest(self, k):
        return self.ranking[:k]

    def easiest(self, k):
        return self.ranking[::-1][:k]


def mean_importance_report(history):
    """Rank samples by their importance averaged over epochs, hardest first.

    ``history`` is a sequence of per-epoch arrays (or a 2-D array of shape
    ``(epochs, n)``). Ties are broken by ascending sample id.
    """
    h = np.asarray(history, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
        raise ValueError("history must contain at least one epoch of importance values")
    mean = h.mean(axis=0)
    ids = np.arange(h.shape[1])
    ranking = np.lexsort((ids, -mean))
    return HardnessReport(ranking=ranking, mean_importance=mean)
