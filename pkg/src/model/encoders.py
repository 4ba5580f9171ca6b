"""Shared-weight feature encoder and context encoder.

Architecture: stem conv (stride 2) -> 2 residual blocks at 1/2 -> 2 residual
blocks at 1/4 -> 2 residual blocks at 1/8. The first block of the 1/4 and
1/8 stages carries the stride-2 transition. ReLU activations, no
normalization layers.

The *fine* level is the resolution flow is estimated at (1/flow_stride,
1/4 by default); the *coarse* level is always 1/8 and feeds the cost volume.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.core.errors import ShapeError


@dataclass
class FeaturePyramid:
    """Per-window features; leading axes are (batch, window).

    Attributes:
        fine: (N, g+1, d, H/s, W/s) with s = flow_stride
        coarse: (N, g+1, d_bar, H/8, W/8), or None when the encoder skips it
    """

    fine: Tensor
    coarse: Optional[Tensor]


@dataclass
class ContextState:
    """Initial GRU state and context features at the fine level.

    Attributes:
        hidden_init: (N, hidden_dim, H/s, W/s), tanh-activated
        context: (N, context_dim, H/s, W/s), ReLU-activated
    """

    hidden_init: Tensor
    context: Tensor


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with a (possibly projected) skip connection."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip: nn.Module
        if stride == 1 and in_channels == out_channels:
            self.skip = nn.Identity()
        else:
            self.skip = nn.Conv2d(in_channels, out_channels, 1, stride=stride)

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.conv1(x))
        y = F.relu(self.conv2(y))
        return F.relu(self.skip(x) + y)


def _stage(in_channels: int, out_channels: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        ResidualBlock(in_channels, out_channels, stride=stride),
        ResidualBlock(out_channels, out_channels),
    )


class FeatureEncoder(nn.Module):
    """Encoder producing fine-level and (optionally) 1/8-level features.

    Args:
        in_channels: Input channels (temporal bins B)
        stage_dims: Widths of the 1/2, 1/4 and 1/8 stages
        fine_stride: Downsampling of the fine output (2, 4 or 8)
        fine_dim: Channels of the fine output; a 1x1 head adapts the stage
            width when the two differ
        coarse: Whether the 1/8 output is needed
    """

    def __init__(
        self,
        in_channels: int,
        stage_dims: tuple[int, int, int],
        fine_stride: int = 4,
        fine_dim: Optional[int] = None,
        coarse: bool = True,
    ) -> None:
        super().__init__()
        if fine_stride not in (2, 4, 8):
            raise ShapeError(f"fine_stride must be 2, 4 or 8, got {fine_stride}")

        self.fine_stride = fine_stride
        self.coarse = coarse
        depth = 3 if coarse or fine_stride == 8 else {2: 1, 4: 2}[fine_stride]

        self.stem = nn.Conv2d(in_channels, stage_dims[0], 3, stride=2, padding=1)
        stages = [_stage(stage_dims[0], stage_dims[0], 1)]
        for level in range(1, depth):
            stages.append(_stage(stage_dims[level - 1], stage_dims[level], 2))
        self.stages = nn.ModuleList(stages)

        fine_level = {2: 0, 4: 1, 8: 2}[fine_stride]
        self.fine_level = fine_level
        width = stage_dims[fine_level]
        self.fine_dim = fine_dim or width
        self.fine_head: nn.Module = (
            nn.Identity() if self.fine_dim == width else nn.Conv2d(width, self.fine_dim, 1)
        )
        self.coarse_dim = stage_dims[2]

    def forward(self, x: Tensor) -> tuple[Tensor, Optional[Tensor]]:
        """Encode an (N, B, H, W) batch.

        Raises:
            ShapeError: If H or W is not divisible by 8
        """
        if x.ndim != 4:
            raise ShapeError(f"encoder input must be NCHW, got {tuple(x.shape)}")
        height, width = x.shape[-2:]
        if height % 8 or width % 8:
            raise ShapeError(f"input size {height}x{width} is not divisible by 8")

        x = F.relu(self.stem(x))
        outputs = []
        for stage in self.stages:
            x = stage(x)
            outputs.append(x)

        fine = self.fine_head(outputs[self.fine_level])
        coarse = outputs[2] if self.coarse else None
        return fine, coarse


class ContextEncoder(nn.Module):
    """Same architecture as the feature encoder, applied to the reference grid.

    The fine output is split into the tanh-activated initial hidden state and
    the ReLU-activated context.
    """

    def __init__(
        self,
        in_channels: int,
        stage_dims: tuple[int, int, int],
        hidden_dim: int,
        context_dim: int,
        fine_stride: int = 4,
    ) -> None:
        super().__init__()
        self.hidden_dim = hidden_dim
        self.context_dim = context_dim
        self.encoder = FeatureEncoder(
            in_channels,
            stage_dims,
            fine_stride=fine_stride,
            fine_dim=hidden_dim + context_dim,
            coarse=False,
        )

    def forward(self, reference: Tensor) -> ContextState:
        out, _ = self.encoder(reference)
        hidden, context = torch.split(out, [self.hidden_dim, self.context_dim], dim=1)
        return ContextState(hidden_init=torch.tanh(hidden), context=F.relu(context))


def encode_features(encoder: FeatureEncoder, windows: Tensor) -> FeaturePyramid:
    """Run the shared encoder over every window.

    Args:
        encoder: Shared-weight feature encoder
        windows: (N, g+1, B, H, W) voxel grids

    Returns:
        FeaturePyramid with both levels in window order
    """
    if windows.ndim != 5:
        raise ShapeError(f"windows must be (N, g+1, B, H, W), got {tuple(windows.shape)}")
    batch, count = windows.shape[:2]
    fine, coarse = encoder(windows.flatten(0, 1))
    return FeaturePyramid(
        fine=fine.unflatten(0, (batch, count)),
        coarse=None if coarse is None else coarse.unflatten(0, (batch, count)),
    )


def encode_context(encoder: ContextEncoder, windows: Tensor) -> ContextState:
    """Context from the reference grid (window index 0) of (N, g+1, B, H, W) input."""
    if windows.ndim != 5:
        raise ShapeError(f"windows must be (N, g+1, B, H, W), got {tuple(windows.shape)}")
    return encoder(windows[:, 0])
