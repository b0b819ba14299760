"""Per-sample importance signals computed from a model's predictive distribution.

All functions accept either a single distribution of shape ``(K,)`` or a batch
of shape ``(B, K)``; batched inputs return one value per row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
_NORM_TOL = 1e-6


class ValidationError(ValueError):
    """Raised when a probability vector or label is malformed."""


def _check_probs(p):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (1, 2) or p.shape[-1] < 1:
        raise ValidationError(f"expected shape (K,) or (B, K), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probabilities must be finite")
    if np.any(p < 0):
        raise ValidationError("probabilities must be non-negative")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _NORM_TOL):
        raise ValidationError(f"probabilities must sum to 1 (got {sums.min():.8g}..{sums.max():.8g})")
    return p


def _check_labels(labels, p):
    k = p.shape[-1]
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be integers")
    expected = () if p.ndim == 1 else (p.shape[0],)
    if labels.shape != expected:
        raise ValidationError(f"labels shape {labels.shape} does not match probabilities {p.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValidationError(f"label out of range [0, {k})")
    return labels


def _onehot(labels, k):
    return np.eye(k, dtype=np.float64)[labels]


def entropy_of(probabilities):
    """Shannon entropy ``-sum p ln p`` in nats, with ``0 ln 0 = 0``."""
    p = _check_probs(probabilities)
    terms = np.where(p > 0, p * np.log(np.maximum(p, PROB_FLOOR)), 0.0)
    h = -terms.sum(axis=-1)
    return np.maximum(h, 0.0) if p.ndim == 2 else float(max(h, 0.0))


def gradient_norm_of(probabilities, label):
    """Euclidean norm of ``p - onehot(label)``.

    This is the exact gradient of softmax cross-entropy with respect to the
    logits, so it lies in ``[0, sqrt(2)]``.
    """
    p = _check_probs(probabilities)
    y = _check_labels(label, p)
    d = p - _onehot(y, p.shape[-1])
    # scale first so tiny deviations do not square to zero
    scale = np.abs(d).max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    g = (safe * np.sqrt(((d / safe) ** 2).sum(axis=-1, keepdims=True)))[..., 0]
    g = np.where(scale[..., 0] > 0, g, 0.0)
    return g if p.ndim == 2 else float(g)


def loss_of(probabilities, label, label_smoothing=0.0):
    """Cross-entropy against the target ``(1 - eps) * onehot + eps / K``."""
    if not 0.0 <= label_smoothing < 1.0:
        raise ValidationError(f"label_smoothing must be in [0, 1), got {label_smoothing}")
    p = _check_probs(probabilities)
    y = _check_labels(label, p)
    k = p.shape[-1]
    target = (1.0 - label_smoothing) * _onehot(y, k) + label_smoothing / k
    loss = -(target * np.log(np.maximum(p, PROB_FLOOR))).sum(axis=-1)
    loss = np.maximum(loss, 0.0)
    return loss if p.ndim == 2 else float(loss)


@dataclass(frozen=True)
class EpochObservations:
    """Per-sample signals collected while training on one epoch's proxy set.

    Arrays are aligned: entry ``j`` describes sample ``ids[j]``.
    """

    ids: np.ndarray
    loss: np.ndarray
    entropy: np.ndarray
    gradient_norm: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        arrays = {
            "loss": np.asarray(self.loss, dtype=np.float64),
            "entropy": np.asarray(self.entropy, dtype=np.float64),
            "gradient_norm": np.asarray(self.gradient_norm, dtype=np.float64),
        }
        correct = np.asarray(self.correct, dtype=bool)
        if ids.ndim != 1:
            raise ValidationError("ids must be one-dimensional")
        for name, arr in arrays.items():
            if arr.shape != ids.shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {ids.shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValidationError(f"{name} values must be finite and non-negative")
        if correct.shape != ids.shape:
            raise ValidationError(f"correct has shape {correct.shape}, expected {ids.shape}")
        object.__setattr__(self, "ids", ids)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "correct", correct)

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_probabilities(cls, ids, probabilities, labels, label_smoothing=0.0):
        """Build observations for a batch from its predicted distributions."""
        p = np.asarray(probabilities, dtype=np.float64)
        labels = np.asarray(labels)
        return cls(
            ids=ids,
            loss=loss_of(p, labels, label_smoothing),
            entropy=entropy_of(p),
            gradient_norm=gradient_norm_of(p, labels),
            correct=p.argmax(axis=1) == labels,
        )

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            empty = np.zeros(0)
            return cls(np.zeros(0, dtype=np.int64), empty, empty, empty, np.zeros(0, dtype=bool))
        return cls(
            ids=np.concatenate([o.ids for o in parts]),
            loss=np.concatenate([o.loss for o in parts]),
            entropy=np.concatenate([o.entropy for o in parts]),
            gradient_norm=np.concatenate([o.gradient_norm for o in parts]),
            correct=np.concatenate([o.correct for o in parts]),
        )
