"""AdamW with decoupled weight decay and the one-cycle learning-rate schedule."""

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Optional

import torch
from torch import Tensor

from src.core.errors import GradError, InvalidConfig, ShapeError

DIV_FACTOR = 25.0
FINAL_DIV_FACTOR = 1e4


@dataclass
class AdamState:
    """Moment estimates per parameter plus the shared step count."""

    step: int = 0
    exp_avg: list[Tensor] = field(default_factory=list)
    exp_avg_sq: list[Tensor] = field(default_factory=list)


@torch.no_grad()
def adamw_step(
    params: list[Tensor],
    grads: list[Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> AdamState:
    """One in-place AdamW update.

    Weight decay multiplies each parameter by ``1 - lr * weight_decay`` before
    the bias-corrected moment step.

    Raises:
        GradError: If any gradient is not finite; nothing is updated
        ShapeError: If a gradient does not match its parameter
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for index, (param, grad) in enumerate(zip(params, grads)):
        if grad.shape != param.shape:
            raise ShapeError(
                f"gradient {index} has shape {tuple(grad.shape)}, parameter {tuple(param.shape)}"
            )
        if not torch.isfinite(grad).all():
            raise GradError(f"gradient {index} contains non-finite values")

    if not state.exp_avg:
        state.exp_avg = [torch.zeros_like(p) for p in params]
        state.exp_avg_sq = [torch.zeros_like(p) for p in params]

    beta1, beta2 = betas
    state.step += 1
    bias1 = 1 - beta1**state.step
    bias2 = 1 - beta2**state.step
    for param, grad, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        param.mul_(1 - lr * weight_decay)
        m.lerp_(grad, 1 - beta1)
        v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
        denom = (v.sqrt() / math.sqrt(bias2)).add_(eps)
        param.addcdiv_(m, denom, value=-lr / bias1)
    return state


class AdamW:
    """Optimizer over a fixed parameter list; the learning rate is passed per step."""

    def __init__(
        self,
        params: Iterable[Tensor],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ) -> None:
        self.params = [p for p in params if p.requires_grad]
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState()

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None

    def step(self, lr: float) -> None:
        """Apply one update from the accumulated ``.grad`` fields (missing = zero)."""
        grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in self.params]
        adamw_step(self.params, grads, self.state, lr, self.betas, self.eps, self.weight_decay)


def one_cycle_lr(
    step: float,
    total: int,
    max_lr: float,
    pct_start: float = 0.05,
    div_factor: float = DIV_FACTOR,
    final_div_factor: float = FINAL_DIV_FACTOR,
) -> float:
    """Linear warmup from max_lr/25 to max_lr, then cosine decay to max_lr/1e4.

    The peak is reached at ``pct_start * total``.

    Raises:
        InvalidConfig: If ``step`` is outside [0, total] or pct_start is not in (0, 1)
    """
    if not 0 <= step <= total:
        raise InvalidConfig(f"step {step} outside [0, {total}]")
    if not 0 < pct_start < 1:
        raise InvalidConfig(f"pct_start must lie in (0, 1), got {pct_start}")

    initial = max_lr / div_factor
    final = max_lr / final_div_factor
    peak = pct_start * total
    if step <= peak:
        return initial + (max_lr - initial) * step / peak
    progress = (step - peak) / (total - peak)
    return final + (max_lr - final) * (1 + math.cos(math.pi * progress)) / 2


def lr_schedule(total: int, max_lr: float, pct_start: float = 0.05) -> list[float]:
    """Learning rates of optimizer steps 0..total-1."""
    return [one_cycle_lr(step, total, max_lr, pct_start) for step in range(total)]


def global_grad_norm(params: Iterable[Tensor]) -> Optional[float]:
    """L2 norm over every present gradient, or None when no gradient exists."""
    norms = [p.grad.detach().norm() for p in params if p.grad is not None]
    if not norms:
        return None
    return float(torch.linalg.vector_norm(torch.stack(norms)))


@torch.no_grad()
def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> Optional[float]:
    """Scale gradients in place so their global norm is at most ``max_norm``.

    Returns the norm before clipping. A non-finite norm leaves the gradients
    untouched for ``adamw_step`` to reject.
    """
    param_list = list(params)
    norm = global_grad_norm(param_list)
    if norm is None or not math.isfinite(norm) or norm <= max_norm:
        return norm
    scale = max_norm / (norm + 1e-6)
    for param in param_list:
        if param.grad is not None:
            param.grad.mul_(scale)
    return norm
