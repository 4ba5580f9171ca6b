"""Motion fusion, GRU flow update and convex upsampling."""

from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.autodiff.ops import softmax
from src.core.errors import InvalidConfig, ShapeError
from src.model.blocks import ChannelAttention, ConvGRU

MASK_SCALE = 0.25


class MotionFusion(nn.Module):
    """F_M = channel_attention(concat(F_D, F_C)) over the enabled branches."""

    def __init__(
        self,
        difference_dim: int,
        corr_dim: int,
        use_attention: bool = True,
        reduction: int = 4,
    ) -> None:
        super().__init__()
        self.difference_dim = difference_dim
        self.corr_dim = corr_dim
        self.out_channels = difference_dim + corr_dim
        if self.out_channels == 0:
            raise InvalidConfig("motion fusion needs at least one branch")
        self.attention: Optional[ChannelAttention] = (
            ChannelAttention(self.out_channels, reduction) if use_attention else None
        )

    def forward(self, f_d: Optional[Tensor], f_c: Optional[Tensor]) -> Tensor:
        branches = []
        for name, tensor, dim in (("F_D", f_d, self.difference_dim), ("F_C", f_c, self.corr_dim)):
            if dim == 0:
                continue
            if tensor is None or tensor.shape[1] != dim:
                raise ShapeError(f"{name} must have {dim} channels")
            branches.append(tensor)
        if len(branches) == 2 and branches[0].shape[-2:] != branches[1].shape[-2:]:
            raise ShapeError(
                f"F_D {tuple(branches[0].shape)} and F_C {tuple(branches[1].shape)} not aligned"
            )
        fused = torch.cat(branches, dim=1)
        return self.attention(fused) if self.attention is not None else fused


class FlowHead(nn.Module):
    """Residual flow decoder: conv3x3 -> ReLU -> conv3x3 -> 2 channels."""

    def __init__(self, in_channels: int, hidden: int = 128) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, 2, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(F.relu(self.conv1(x)))


class MaskHead(nn.Module):
    """Upsampling-mask predictor: factor^2 * 9 logits per fine pixel, scaled by 0.25."""

    def __init__(self, in_channels: int, factor: int, hidden: int = 256) -> None:
        super().__init__()
        self.factor = factor
        self.conv1 = nn.Conv2d(in_channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, factor * factor * 9, 1)

    def forward(self, x: Tensor) -> Tensor:
        return MASK_SCALE * self.conv2(F.relu(self.conv1(x)))


def convex_weights(mask_logits: Tensor, factor: int) -> Tensor:
    """Softmax over the 9 neighbours: (N, 1, 9, f, f, h, w)."""
    batch, _, height, width = mask_logits.shape
    mask = mask_logits.view(batch, 1, 9, factor, factor, height, width)
    return softmax(mask, dim=2)


def convex_upsample(flow: Tensor, mask_logits: Tensor, factor: int) -> Tensor:
    """Upsample (N, 2, h, w) flow by ``factor`` as convex combinations of 3x3 cells.

    The coarse flow is edge-replicated before unfolding and scaled by
    ``factor`` so displacements are expressed in full-resolution pixels.
    """
    batch, channels, height, width = flow.shape
    if channels != 2:
        raise ShapeError(f"flow must have 2 channels, got {channels}")
    if mask_logits.shape != (batch, factor * factor * 9, height, width):
        raise ShapeError(
            f"mask {tuple(mask_logits.shape)} does not match flow {tuple(flow.shape)} "
            f"at factor {factor}"
        )
    weights = convex_weights(mask_logits, factor)
    padded = F.pad(factor * flow, (1, 1, 1, 1), mode="replicate")
    neighbours = F.unfold(padded, [3, 3]).view(batch, 2, 9, 1, 1, height, width)
    up = torch.sum(weights * neighbours, dim=2)
    up = up.permute(0, 1, 4, 2, 5, 3)
    return up.reshape(batch, 2, factor * height, factor * width)


class UpdateBlock(nn.Module):
    """GRU over concat(F_M, flow, context) with flow and mask heads.

    Args:
        motion_dim: Channels of F_M
        context_dim: Context channels
        hidden_dim: GRU hidden channels
        factor: Fine-to-full upsampling factor (flow_stride)
    """

    def __init__(self, motion_dim: int, context_dim: int, hidden_dim: int, factor: int) -> None:
        super().__init__()
        self.hidden_dim = hidden_dim
        self.factor = factor
        self.gru = ConvGRU(motion_dim + 2 + context_dim, hidden_dim)
        self.flow_head = FlowHead(hidden_dim)
        self.mask_head = MaskHead(hidden_dim, factor)

    def forward(
        self, hidden: Tensor, context: Tensor, motion: Tensor, flow: Tensor
    ) -> tuple[Tensor, Tensor]:
        """One update: returns (hidden', delta_flow)."""
        x = torch.cat([motion, flow, context], dim=1)
        hidden = self.gru(hidden, x)
        return hidden, self.flow_head(hidden)

    def upsample(self, flow: Tensor, hidden: Tensor) -> Tensor:
        """Full-resolution flow from the fine flow and the GRU state."""
        return convex_upsample(flow, self.mask_head(hidden), self.factor)
