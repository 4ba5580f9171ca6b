"""Training samples, flips, crops and batching.

Flips act on voxel grids, flow and mask together. A horizontal flip mirrors
columns and negates dx; a vertical flip mirrors rows and negates dy. On the
grids this equals mirroring the events (``EventStream.hflip``/``vflip``) and
voxelizing again.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from src.core.config import TrainConfig
from src.core.errors import ShapeError
from src.synth.camera import SyntheticSample


@dataclass
class FlowSample:
    """Network input and labels of one sample.

    Attributes:
        windows: (g+1, B, H, W) voxel grids
        flow: (2, H, W) ground truth; invalid pixels may be NaN
        valid: (H, W) boolean mask
    """

    windows: np.ndarray
    flow: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        height, width = self.windows.shape[-2:]
        if self.windows.ndim != 4:
            raise ShapeError(f"windows must be (g+1, B, H, W), got {self.windows.shape}")
        if self.flow.shape != (2, height, width) or self.valid.shape != (height, width):
            raise ShapeError(
                f"flow {self.flow.shape} / mask {self.valid.shape} do not match "
                f"windows {self.windows.shape}"
            )

    @classmethod
    def from_synthetic(cls, sample: SyntheticSample) -> "FlowSample":
        return cls(
            windows=sample.windows.to_array(np.float64),
            flow=sample.flow.astype(np.float64),
            valid=sample.valid.astype(bool),
        )


def hflip_sample(sample: FlowSample) -> FlowSample:
    return FlowSample(
        windows=sample.windows[..., ::-1].copy(),
        flow=hflip_flow(sample.flow),
        valid=sample.valid[:, ::-1].copy(),
    )


def vflip_sample(sample: FlowSample) -> FlowSample:
    return FlowSample(
        windows=sample.windows[..., ::-1, :].copy(),
        flow=vflip_flow(sample.flow),
        valid=sample.valid[::-1, :].copy(),
    )


def hflip_flow(flow: np.ndarray) -> np.ndarray:
    """Mirror a (2, H, W) or (N, 2, H, W) flow field horizontally."""
    out = flow[..., ::-1].copy()
    out[..., 0, :, :] = -out[..., 0, :, :]
    return out


def vflip_flow(flow: np.ndarray) -> np.ndarray:
    out = flow[..., ::-1, :].copy()
    out[..., 1, :, :] = -out[..., 1, :, :]
    return out


def random_crop(sample: FlowSample, size: Optional[int], rng: np.random.Generator) -> FlowSample:
    """Square crop at a random position; larger-than-sample sizes leave it whole."""
    height, width = sample.valid.shape
    if size is None or (size >= height and size >= width):
        return sample
    crop_h, crop_w = min(size, height), min(size, width)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    rows, cols = slice(top, top + crop_h), slice(left, left + crop_w)
    return FlowSample(
        windows=sample.windows[..., rows, cols].copy(),
        flow=sample.flow[:, rows, cols].copy(),
        valid=sample.valid[rows, cols].copy(),
    )


def augment(sample: FlowSample, config: TrainConfig, rng: np.random.Generator) -> FlowSample:
    """Crop, then flip horizontally and vertically with the configured probabilities."""
    sample = random_crop(sample, config.crop, rng)
    if rng.uniform() < config.hflip_prob:
        sample = hflip_sample(sample)
    if rng.uniform() < config.vflip_prob:
        sample = vflip_sample(sample)
    return sample


def collate(
    samples: list[FlowSample], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (N, g+1, B, H, W) windows, (N, 2, H, W) flow and (N, H, W) mask."""
    if not samples:
        raise ShapeError("cannot collate an empty batch")
    windows = torch.from_numpy(np.stack([s.windows for s in samples])).to(dtype)
    flow = torch.from_numpy(np.stack([s.flow for s in samples])).to(dtype)
    valid = torch.from_numpy(np.stack([s.valid for s in samples]))
    return windows, flow, valid
