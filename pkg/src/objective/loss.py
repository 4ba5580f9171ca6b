"""Exponentially weighted sequence loss over refinement iterates."""

from collections.abc import Sequence

import torch
from torch import Tensor

from src.core.errors import EmptyGroundTruth, ShapeError

DEFAULT_GAMMA = 0.8


def sequence_weights(iterations: int, gamma: float = DEFAULT_GAMMA) -> list[float]:
    """Weight gamma^(K-k) of iterate k = 1..K; the last weight is always 1."""
    return [gamma ** (iterations - k) for k in range(1, iterations + 1)]


def _check_inputs(flows: Sequence[Tensor], gt: Tensor, valid: Tensor) -> None:
    if not flows:
        raise ShapeError("sequence loss needs at least one iterate")
    if gt.ndim != 4 or gt.shape[1] != 2:
        raise ShapeError(f"ground truth must be (N, 2, H, W), got {tuple(gt.shape)}")
    if tuple(valid.shape) != (gt.shape[0], *gt.shape[-2:]):
        raise ShapeError(f"mask {tuple(valid.shape)} does not match flow {tuple(gt.shape)}")
    for flow in flows:
        if flow.shape != gt.shape:
            raise ShapeError(f"iterate {tuple(flow.shape)} does not match {tuple(gt.shape)}")


def step_losses(flows: Sequence[Tensor], gt: Tensor, valid: Tensor) -> list[Tensor]:
    """Masked mean L1 (summed over both channels) of each iterate.

    Args:
        flows: Full-resolution iterates, each (N, 2, H, W)
        gt: Ground truth (N, 2, H, W); invalid pixels may hold NaN
        valid: Boolean mask (N, H, W)

    Raises:
        EmptyGroundTruth: If no pixel is valid
    """
    _check_inputs(flows, gt, valid)
    mask = valid.bool() & torch.isfinite(gt).all(dim=1)
    count = mask.sum()
    if int(count) == 0:
        raise EmptyGroundTruth("no valid ground-truth pixels")

    # NaN ground truth must not reach the gradient through the masked product.
    target = torch.where(mask.unsqueeze(1), gt, torch.zeros_like(gt))
    weight = mask.to(gt.dtype)
    losses = []
    for flow in flows:
        l1 = (flow - target).abs().sum(dim=1)
        losses.append((l1 * weight).sum() / count)
    return losses


def sequence_loss(
    flows: Sequence[Tensor], gt: Tensor, valid: Tensor, gamma: float = DEFAULT_GAMMA
) -> Tensor:
    """Sum over iterates of gamma^(K-k) times the masked L1 of iterate k."""
    losses = step_losses(flows, gt, valid)
    weights = sequence_weights(len(losses), gamma)
    total = losses[-1] * weights[-1]
    for loss, weight in zip(losses[:-1], weights[:-1]):
        total = total + weight * loss
    return total
