"""Analytic MAC and parameter accounting."""

from src.macs.accountant import (
    CostBreakdown,
    CostEntry,
    ScalingReport,
    count_model,
    dense_volume_macs,
    log_log_slope,
    verify_scaling,
)

__all__ = [
    "CostBreakdown",
    "CostEntry",
    "ScalingReport",
    "count_model",
    "dense_volume_macs",
    "log_log_slope",
    "verify_scaling",
]
