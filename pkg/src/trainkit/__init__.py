"""Optimizer, learning-rate schedule, augmentation and training loop."""

from src.trainkit.augment import (
    FlowSample,
    augment,
    collate,
    hflip_flow,
    hflip_sample,
    random_crop,
    vflip_flow,
    vflip_sample,
)
from src.trainkit.optim import (
    AdamState,
    AdamW,
    adamw_step,
    clip_grad_norm,
    lr_schedule,
    one_cycle_lr,
)
from src.trainkit.trainer import TrainResult, evaluate_model, fit, iteration_epe, predict

__all__ = [
    "AdamState",
    "AdamW",
    "FlowSample",
    "TrainResult",
    "adamw_step",
    "augment",
    "clip_grad_norm",
    "collate",
    "evaluate_model",
    "fit",
    "hflip_flow",
    "hflip_sample",
    "iteration_epe",
    "lr_schedule",
    "one_cycle_lr",
    "predict",
    "random_crop",
    "vflip_flow",
    "vflip_sample",
]
