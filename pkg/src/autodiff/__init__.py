"""Differentiable operation set and finite-difference gradient checks."""

from src.autodiff.gradcheck import GradCheckReport, check_module, finite_diff_check
from src.autodiff.ops import (
    GRUWeights,
    bilinear_sample,
    channel_attention,
    conv2d,
    coords_grid,
    dwsep_conv3d,
    gru_cell,
    softmax,
    warp,
)

__all__ = [
    "GRUWeights",
    "GradCheckReport",
    "bilinear_sample",
    "channel_attention",
    "check_module",
    "conv2d",
    "coords_grid",
    "dwsep_conv3d",
    "finite_diff_check",
    "gru_cell",
    "softmax",
    "warp",
]
