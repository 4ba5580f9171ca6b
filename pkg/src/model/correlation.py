"""All-pairs cost volume at 1/8 resolution and the correlation motion encoder.

The volume holds C[p, q] = <F_ref(p), F_tgt(q)> / sqrt(d_bar) for every
reference pixel p and target pixel q, stored as (N*h*w, 1, h, w) so that the
target dimensions can be average-pooled into a pyramid and sampled with
``bilinear_sample``.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.autodiff.ops import bilinear_sample, coords_grid
from src.core.errors import InvalidConfig, ShapeError


@dataclass
class CostVolume:
    """Correlation pyramid.

    Attributes:
        pyramid: Level l has shape (N*h*w, 1, h/2^l, w/2^l); level 0 is the
            full-resolution volume
        batch: N
        height: h (reference rows at 1/8)
        width: w (reference columns at 1/8)
    """

    pyramid: list[Tensor]
    batch: int
    height: int
    width: int

    @property
    def values(self) -> Tensor:
        return self.pyramid[0]

    @property
    def levels(self) -> int:
        return len(self.pyramid)

    def dense(self) -> Tensor:
        """The level-0 volume as (N, h, w, h, w)."""
        return self.values.reshape(self.batch, self.height, self.width, self.height, self.width)


def build_cost_volume(reference: Tensor, target: Tensor, levels: int = 1) -> CostVolume:
    """All-pairs dot products scaled by 1/sqrt(d_bar), plus pooled levels.

    Args:
        reference: (N, d_bar, h, w) features of window 0
        target: (N, d_bar, h, w) features of window g
        levels: Pyramid depth (pool factor 2 per level over target dims)

    Raises:
        ShapeError: If the feature maps differ in shape
        InvalidConfig: If levels < 1
    """
    if reference.shape != target.shape or reference.ndim != 4:
        raise ShapeError(
            f"cost volume needs equal NCHW features, got {tuple(reference.shape)} "
            f"and {tuple(target.shape)}"
        )
    if levels < 1:
        raise InvalidConfig(f"pyramid levels must be >= 1, got {levels}")

    batch, channels, height, width = reference.shape
    corr = torch.einsum("nchw,ncuv->nhwuv", reference, target) / math.sqrt(channels)
    volume = corr.reshape(batch * height * width, 1, height, width)

    pyramid = [volume]
    for _ in range(levels - 1):
        volume = F.avg_pool2d(volume, kernel_size=2, stride=2, ceil_mode=True)
        pyramid.append(volume)
    return CostVolume(pyramid=pyramid, batch=batch, height=height, width=width)


def lookup_offsets(radius: int, like: Tensor) -> Tensor:
    """(2, 2r+1, 2r+1) integer displacement window; rows vary dy, columns dx."""
    steps = torch.arange(-radius, radius + 1, dtype=like.dtype, device=like.device)
    dy, dx = torch.meshgrid(steps, steps, indexing="ij")
    return torch.stack([dx, dy])


def lookup(volume: CostVolume, flow: Tensor, radius: int) -> Tensor:
    """Sample every pyramid level around p + flow(p).

    Channel k of level l corresponds to displacement (dx, dy) with
    k = (dy + r) * (2r + 1) + (dx + r); levels are concatenated in order.

    Args:
        volume: Cost volume of the sample batch
        flow: (N, 2, h, w) flow at 1/8 resolution
        radius: Window radius r >= 0

    Returns:
        (N, levels * (2r+1)^2, h, w)
    """
    if radius < 0:
        raise InvalidConfig(f"lookup radius must be >= 0, got {radius}")
    expected = (volume.batch, 2, volume.height, volume.width)
    if tuple(flow.shape) != expected:
        raise ShapeError(f"lookup flow must be {expected}, got {tuple(flow.shape)}")

    side = 2 * radius + 1
    centroid = coords_grid(volume.batch, volume.height, volume.width, flow) + flow
    centroid = centroid.permute(0, 2, 3, 1).reshape(-1, 2, 1, 1)
    offsets = lookup_offsets(radius, flow).unsqueeze(0)

    sampled = []
    for level, corr in enumerate(volume.pyramid):
        coords = (centroid + 0.5) / 2**level - 0.5 + offsets
        taps = bilinear_sample(corr, coords)
        sampled.append(taps.reshape(volume.batch, volume.height, volume.width, side * side))
    return torch.cat(sampled, dim=-1).permute(0, 3, 1, 2).contiguous()


def downsample_flow(flow: Tensor, size: tuple[int, int], factor: float) -> Tensor:
    """Bilinear resize of a flow field with displacement values divided by ``factor``."""
    if tuple(flow.shape[-2:]) != tuple(size):
        flow = F.interpolate(flow, size=size, mode="bilinear", align_corners=False)
    return flow / factor


class CorrelationEncoder(nn.Module):
    """Lookup -> upsample to the fine level -> two 3x3 convolutions with ReLU.

    Args:
        lookup_dim: levels * (2r+1)^2 input channels
        corr_dim: Output channels of F_C
        hidden: Width of the intermediate convolution
        radius: Lookup radius
        factor: Ratio between fine and 1/8 resolution (8 / flow_stride)
    """

    def __init__(
        self,
        lookup_dim: int,
        corr_dim: int = 64,
        radius: int = 4,
        factor: int = 2,
        hidden: int = 96,
    ) -> None:
        super().__init__()
        self.radius = radius
        self.factor = factor
        self.conv1 = nn.Conv2d(lookup_dim, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, corr_dim, 3, padding=1)

    def sample(self, volume: CostVolume, flow: Tensor) -> Tensor:
        """Lookup at the fine-level flow, upsampled back to the fine level."""
        coarse_flow = downsample_flow(flow, (volume.height, volume.width), self.factor)
        corr = lookup(volume, coarse_flow, self.radius)
        if self.factor != 1:
            corr = F.interpolate(corr, size=flow.shape[-2:], mode="bilinear", align_corners=False)
        return corr

    def forward(self, volume: CostVolume, flow: Tensor) -> Tensor:
        corr = self.sample(volume, flow)
        return F.relu(self.conv2(F.relu(self.conv1(corr))))
