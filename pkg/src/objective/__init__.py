"""Sequence loss and optical-flow evaluation metrics."""

from src.objective.loss import sequence_loss, sequence_weights, step_losses
from src.objective.metrics import (
    MetricReport,
    angular_error,
    epe,
    evaluate,
    npe,
    outlier_pct,
)

__all__ = [
    "MetricReport",
    "angular_error",
    "epe",
    "evaluate",
    "npe",
    "outlier_pct",
    "sequence_loss",
    "sequence_weights",
    "step_losses",
]
