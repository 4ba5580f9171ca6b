"""Training loop with one-cycle AdamW, gradient clipping and JSONL logging."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch
from loguru import logger

from src.core.config import TrainConfig
from src.core.errors import DivergenceError, InvalidConfig
from src.model.network import EDCFlow
from src.objective.loss import sequence_loss
from src.objective.metrics import MetricReport, epe, evaluate
from src.storage.checkpoint import save_checkpoint
from src.trainkit.augment import FlowSample, augment, collate
from src.trainkit.optim import AdamW, clip_grad_norm, lr_schedule


@dataclass
class TrainResult:
    """Outcome of ``fit``.

    Attributes:
        log: Training log entries in the order written
        checkpoint_sha256: Payload digest of the final checkpoint, if one was written
    """

    log: list[dict[str, Any]] = field(default_factory=list)
    checkpoint_sha256: Optional[str] = None

    @property
    def final_loss(self) -> float:
        return float(self.log[-1]["loss"]) if self.log else math.nan


def _dtype(config: TrainConfig) -> torch.dtype:
    return torch.float64 if config.double_precision else torch.float32


@torch.no_grad()
def predict(
    model: EDCFlow,
    samples: list[FlowSample],
    iterations: Optional[int] = None,
    batch: int = 8,
) -> list[np.ndarray]:
    """Per-iterate full-resolution predictions, each (N, 2, H, W)."""
    dtype = next(model.parameters()).dtype
    model.eval()
    chunks: list[list[np.ndarray]] = []
    for start in range(0, len(samples), batch):
        windows, _, _ = collate(samples[start : start + batch], dtype)
        trace = model.run_iterations(windows, iterations)
        chunks.append([flow.cpu().numpy() for flow in trace.upsampled])
    return [np.concatenate(per_step) for per_step in zip(*chunks)]


def evaluate_model(
    model: EDCFlow, samples: list[FlowSample], iterations: Optional[int] = None
) -> MetricReport:
    """Metrics of the final iterate pooled over every valid pixel of every sample."""
    if not samples:
        raise InvalidConfig("evaluation set is empty")
    final = predict(model, samples, iterations)[-1]
    gt = np.stack([s.flow for s in samples])
    valid = np.stack([s.valid for s in samples])
    return evaluate(final, gt, valid)


def iteration_epe(
    model: EDCFlow, samples: list[FlowSample], iterations: Optional[int] = None
) -> np.ndarray:
    """EPE of every iterate on every sample, shaped (samples, K)."""
    flows = predict(model, samples, iterations)
    return np.array(
        [[epe(step[i], s.flow, s.valid) for step in flows] for i, s in enumerate(samples)]
    )


def _write_log(handle: Any, entry: dict[str, Any]) -> None:
    if handle is not None:
        handle.write(json.dumps(entry) + "\n")
        handle.flush()


def fit(
    model: EDCFlow,
    train_set: list[FlowSample],
    config: TrainConfig,
    val_set: Optional[list[FlowSample]] = None,
    log_path: Optional[Path] = None,
    checkpoint_path: Optional[Path] = None,
) -> TrainResult:
    """Train ``model`` in place.

    Each step draws ``config.batch`` samples, augments them, runs the
    refinement, backpropagates the sequence loss, clips the global gradient
    norm and applies AdamW at the scheduled learning rate.

    Args:
        model: Network to train
        train_set: Training samples
        config: Optimizer, schedule and augmentation settings
        val_set: Samples for periodic validation EPE
        log_path: Line-delimited JSON training log destination
        checkpoint_path: Final checkpoint destination

    Returns:
        TrainResult with the log entries and the checkpoint digest

    Raises:
        InvalidConfig: If the training set is empty
        DivergenceError: If the loss becomes non-finite
        GradError: If a gradient becomes non-finite after clipping
    """
    if not train_set:
        raise InvalidConfig("training set is empty")

    dtype = _dtype(config)
    model.to(dtype)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = AdamW(
        model.parameters(),
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )

    result = TrainResult()
    handle = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        handle = open(log_path, "w", encoding="utf-8")

    logger.info(
        f"Training for {config.total_steps} steps on {len(train_set)} samples "
        f"(batch {config.batch}, max lr {config.max_lr})"
    )
    schedule = lr_schedule(config.total_steps, config.max_lr, config.pct_start)
    try:
        for step, lr in enumerate(schedule):
            indices = rng.integers(0, len(train_set), size=config.batch)
            batch = [augment(train_set[i], config, rng) for i in indices]
            windows, gt, valid = collate(batch, dtype)

            model.train()
            trace = model.run_iterations(windows)
            loss = sequence_loss(trace.upsampled, gt, valid, config.gamma)
            if not torch.isfinite(loss):
                raise DivergenceError(f"loss became {float(loss)} at step {step + 1} (lr {lr:.3g})")

            optimizer.zero_grad()
            loss.backward()
            grad_norm = clip_grad_norm(optimizer.params, config.grad_clip)
            optimizer.step(lr)

            done = step + 1
            is_last = done == config.total_steps
            validate = val_set is not None and (done % config.val_interval == 0 or is_last)
            if done % config.log_interval == 0 or validate or is_last:
                entry: dict[str, Any] = {
                    "step": done,
                    "lr": lr,
                    "loss": float(loss),
                    "grad_norm": grad_norm,
                }
                if validate and val_set:
                    entry["val_epe"] = evaluate_model(model, val_set).epe
                result.log.append(entry)
                _write_log(handle, entry)
                logger.info(
                    f"Step {done}/{config.total_steps}: loss {entry['loss']:.4f}"
                    + (f", val EPE {entry['val_epe']:.4f}" if "val_epe" in entry else "")
                )
    finally:
        if handle is not None:
            handle.close()

    if checkpoint_path is not None:
        state = {name: p.detach() for name, p in model.named_parameters()}
        result.checkpoint_sha256 = save_checkpoint(
            checkpoint_path, state, model.config.model_dump()
        )
    return result
