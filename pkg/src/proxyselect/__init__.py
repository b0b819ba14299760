"""Dynamic proxy-set selection for faster training.

Each epoch trains on a subset of the training data chosen by sampling from the
softmax of per-sample importance values kept in a proxy memory. The subset
size follows a ratio schedule and the importance metric is drawn from an
epoch-dependent mixture.
"""
from .memory import (
    MetricKind,
    ProxyMemory,
    importance_vector,
    init_memory,
    mean_importance_report,
    record_observations,
    update_prediction_scores,
)
from .metrics import EpochObservations, entropy_of, gradient_norm_of, loss_of
from .scheduler import (
    MetricMixture,
    RatioSchedule,
    ScheduleMode,
    draw_metric,
    metric_probabilities,
    proxy_size,
)
from .selector import ProxySet, SelectionStrategy, sampling_probabilities, select_proxy
from .trainer import HyperParams, RunConfig, RunLog, RunMode, evaluate, run_asp, train_epoch

__all__ = [
    "MetricKind",
    "ProxyMemory",
    "importance_vector",
    "init_memory",
    "mean_importance_report",
    "record_observations",
    "update_prediction_scores",
    "EpochObservations",
    "entropy_of",
    "gradient_norm_of",
    "loss_of",
    "MetricMixture",
    "RatioSchedule",
    "ScheduleMode",
    "draw_metric",
    "metric_probabilities",
    "proxy_size",
    "ProxySet",
    "SelectionStrategy",
    "sampling_probabilities",
    "select_proxy",
    "HyperParams",
    "RunConfig",
    "RunLog",
    "RunMode",
    "evaluate",
    "run_asp",
    "train_epoch",
]

__version__ = "0.1.0"
