"""Small numpy classifiers with hand-written backward passes."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MODEL_FORMAT_VERSION = 1


class ModelKind(str, enum.Enum):
    LINEAR = "linear"
    MLP = "mlp"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = ModelKind.MLP
    input_dim: int = 1
    num_classes: int = 2
    hidden_units: int = 64
    init_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ModelKind(self.kind))
        except ValueError:
            raise ConfigError("model.kind", f"unknown model kind {self.kind!r}") from None
        if self.input_dim < 1:
            raise ConfigError("model.input_dim", "must be >= 1")
        if self.num_classes < 1:
            raise ConfigError("model.num_classes", "must be >= 1")
        if self.kind is ModelKind.MLP and self.hidden_units < 1:
            raise ConfigError("model.hidden_units", "must be >= 1")


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Model:
    """Linear softmax regression or a ReLU MLP with one hidden layer.

    Parameters live in ``self.params``, an ordered dict of float64 arrays.
    """

    def __init__(self, spec, params=None):
        self.spec = spec
        if params is None:
            params = self._init_params(np.random.default_rng(spec.init_seed))
        self.params = params

    def _init_params(self, rng):
        s = self.spec
        if s.kind is ModelKind.LINEAR:
            return {
                "W": rng.normal(0.0, np.sqrt(1.0 / s.input_dim), (s.input_dim, s.num_classes)),
                "b": np.zeros(s.num_classes),
            }
        return {
            "W1": rng.normal(0.0, np.sqrt(2.0 / s.input_dim), (s.input_dim, s.hidden_units)),
            "b1": np.zeros(s.hidden_units),
            "W2": rng.normal(0.0, np.sqrt(1.0 / s.hidden_units), (s.hidden_units, s.num_classes)),
            "b2": np.zeros(s.num_classes),
        }

    def copy(self):
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()})

    def check_input(self, x):
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ConfigError("model.input_dim", f"model expects {self.spec.input_dim} features, got shape {x.shape}")

    def forward(self, x):
        """Return ``(logits, cache)``; ``cache`` feeds ``backward``."""
        p = self.params
        if self.spec.kind is ModelKind.LINEAR:
            return x @ p["W"] + p["b"], (x,)
        pre = x @ p["W1"] + p["b1"]
        h = np.maximum(pre, 0.0)
        return h @ p["W2"] + p["b2"], (x, pre, h)

    def predict_proba(self, x):
        return softmax(self.forward(x)[0])

    def backward(self, cache, dlogits):
        """Gradients of a loss with the given logit gradient, summed over the batch."""
        p = self.params
        if self.spec.kind is ModelKind.LINEAR:
            (x,) = cache
            return {"W": x.T @ dlogits, "b": dlogits.sum(axis=0)}
        x, pre, h = cache
        dh = (dlogits @ p["W2"].T) * (pre > 0)
        return {
            "W1": x.T @ dh,
            "b1": dh.sum(axis=0),
            "W2": h.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }

    def loss_and_grad(self, x, y, label_smoothing=0.0):
        """Mean smoothed cross-entropy over the batch and its parameter gradients.

        Also returns the batch probabilities so callers can derive per-sample
        signals from the same forward pass.
        """
        logits, cache = self.forward(x)
        probs = softmax(logits)
        k = self.spec.num_classes
        target = np.full((len(y), k), label_smoothing / k)
        target[np.arange(len(y)), y] += 1.0 - label_smoothing
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = float(-(target * logp).sum() / len(y))
        grads = self.backward(cache, (probs - target) / len(y))
        return loss, grads, probs

    def save(self, path):
        s = self.spec
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format_version=np.int64(MODEL_FORMAT_VERSION),
                kind=np.array(s.kind.value),
                dims=np.array([s.input_dim, s.num_classes, s.hidden_units], dtype=np.int64),
                init_seed=np.uint64(s.init_seed),
                **{"param_" + k: v for k, v in self.params.items()},
            )

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            version = int(z["format_version"])
            if version != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model snapshot version {version}")
            d = z["dims"]
            spec = ModelSpec(str(z["kind"]), int(d[0]), int(d[1]), int(d[2]), int(z["init_seed"]))
            params = {k[len("param_"):]: z[k].copy() for k in z.files if k.startswith("param_")}
        model = cls(spec, params)
        expected = set(model._init_params(np.random.default_rng(0)))
        if set(params) != expected:
            raise ValueError(f"snapshot parameters {sorted(params)} do not match a {spec.kind.value} model")
        return model
