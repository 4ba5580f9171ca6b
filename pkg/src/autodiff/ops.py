"""Differentiable operation set used by the network.

Every operation is a thin functional wrapper over ``torch`` that validates
shapes up front and raises ``ShapeError``/``InvalidConfig`` instead of the
backend's generic errors. Gradients come from torch autograd.
"""

import math
from typing import NamedTuple, Optional, Union

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.core.errors import InvalidConfig, ShapeError

IntPair = Union[int, tuple[int, int]]
IntTriple = Union[int, tuple[int, int, int]]


def _require_ndim(name: str, tensor: Tensor, ndim: int, layout: str) -> None:
    if tensor.ndim != ndim:
        raise ShapeError(f"{name} must be {layout}, got shape {tuple(tensor.shape)}")


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: IntPair = 1,
    padding: IntPair = 0,
    groups: int = 1,
) -> Tensor:
    """2D cross-correlation with zero padding.

    Output size is floor((H + 2p - k) / stride) + 1 per spatial axis.

    Raises:
        ShapeError: If ranks or channel counts disagree
        InvalidConfig: If stride < 1
    """
    _require_ndim("conv2d input", input, 4, "NCHW")
    _require_ndim("conv2d weight", weight, 4, "(C_out, C_in/groups, kH, kW)")
    strides = (stride, stride) if isinstance(stride, int) else stride
    if min(strides) < 1:
        raise InvalidConfig(f"stride must be >= 1, got {stride}")
    if input.shape[1] != weight.shape[1] * groups:
        raise ShapeError(
            f"conv2d expects {weight.shape[1] * groups} input channels, got {input.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias shape {tuple(bias.shape)} != ({weight.shape[0]},)")
    return F.conv2d(input, weight, bias, stride=stride, padding=padding, groups=groups)


def dwsep_conv3d(
    input: Tensor,
    depthwise: Tensor,
    pointwise: Tensor,
    stride: IntTriple = 1,
    padding: IntTriple = 0,
    depthwise_bias: Optional[Tensor] = None,
    pointwise_bias: Optional[Tensor] = None,
) -> Tensor:
    """Depthwise 3D convolution followed by 1x1x1 channel mixing.

    Args:
        input: (N, C, T, H, W)
        depthwise: (C, 1, kT, kH, kW), one filter per channel
        pointwise: (C_out, C, 1, 1, 1)

    Raises:
        ShapeError: If the depthwise multiplier is not 1 or channels disagree
    """
    _require_ndim("dwsep_conv3d input", input, 5, "NCTHW")
    _require_ndim("depthwise weight", depthwise, 5, "(C, 1, kT, kH, kW)")
    _require_ndim("pointwise weight", pointwise, 5, "(C_out, C, 1, 1, 1)")
    channels = input.shape[1]
    if depthwise.shape[0] != channels or depthwise.shape[1] != 1:
        raise ShapeError(
            f"depthwise weight {tuple(depthwise.shape)} does not match {channels} channels"
        )
    if pointwise.shape[1] != channels or pointwise.shape[2:] != (1, 1, 1):
        raise ShapeError(
            f"pointwise weight {tuple(pointwise.shape)} is not (C_out, {channels}, 1, 1, 1)"
        )
    x = F.conv3d(input, depthwise, depthwise_bias, stride=stride, padding=padding, groups=channels)
    return F.conv3d(x, pointwise, pointwise_bias)


def bilinear_sample(source: Tensor, coords: Tensor) -> Tensor:
    """Sample ``source`` at absolute pixel coordinates with zero padding.

    Coordinates follow the pixel-center convention: (x, y) = (j, i) returns
    ``source[..., i, j]`` exactly. Gradients reach both the source values and
    the coordinates.

    Args:
        source: (N, C, H, W) or (C, H, W)
        coords: (N, 2, H_out, W_out) or (2, H_out, W_out), channel 0 = x, 1 = y

    Returns:
        Sampled values shaped (N, C, H_out, W_out), or (C, H_out, W_out) unbatched
    """
    unbatched = source.ndim == 3
    if unbatched:
        source, coords = source.unsqueeze(0), coords.unsqueeze(0)
    _require_ndim("bilinear_sample source", source, 4, "NCHW")
    _require_ndim("bilinear_sample coords", coords, 4, "N2HW")
    if coords.shape[1] != 2 or coords.shape[0] != source.shape[0]:
        raise ShapeError(
            f"coords {tuple(coords.shape)} incompatible with source {tuple(source.shape)}"
        )

    height, width = source.shape[-2:]
    x = (2.0 * coords[:, 0] + 1.0) / width - 1.0
    y = (2.0 * coords[:, 1] + 1.0) / height - 1.0
    grid = torch.stack([x, y], dim=-1)
    out = F.grid_sample(source, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    return out.squeeze(0) if unbatched else out


def coords_grid(batch: int, height: int, width: int, like: Tensor) -> Tensor:
    """Pixel coordinate grid (N, 2, H, W) with x in channel 0."""
    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=like.dtype, device=like.device),
        torch.arange(width, dtype=like.dtype, device=like.device),
        indexing="ij",
    )
    return torch.stack([xs, ys]).unsqueeze(0).expand(batch, -1, -1, -1)


def warp(source: Tensor, flow: Tensor) -> Tensor:
    """Backward warp: out(p) = source(p + flow(p))."""
    if flow.shape[-2:] != source.shape[-2:]:
        raise ShapeError(f"flow {tuple(flow.shape)} and source {tuple(source.shape)} differ")
    if not flow.requires_grad and not torch.any(flow):
        # Zero constant flow is the exact identity.
        return source
    grid = coords_grid(source.shape[0], source.shape[-2], source.shape[-1], source)
    return bilinear_sample(source, grid + flow)


class GRUWeights(NamedTuple):
    """Gate convolutions of a convolutional GRU (3x3 kernels)."""

    update_weight: Tensor
    update_bias: Tensor
    reset_weight: Tensor
    reset_bias: Tensor
    candidate_weight: Tensor
    candidate_bias: Tensor


def gru_cell(hidden: Tensor, input: Tensor, weights: GRUWeights) -> Tensor:
    """Convolutional GRU step.

    z = sigmoid(conv([h, x])), r = sigmoid(conv([h, x])),
    q = tanh(conv([r * h, x])), h' = (1 - z) * h + z * q.

    Raises:
        ShapeError: If hidden and input are not spatially aligned
    """
    _require_ndim("gru hidden", hidden, 4, "NCHW")
    _require_ndim("gru input", input, 4, "NCHW")
    if hidden.shape[0] != input.shape[0] or hidden.shape[-2:] != input.shape[-2:]:
        raise ShapeError(
            f"hidden {tuple(hidden.shape)} and input {tuple(input.shape)} are not aligned"
        )
    hx = torch.cat([hidden, input], dim=1)
    z = torch.sigmoid(conv2d(hx, weights.update_weight, weights.update_bias, padding=1))
    r = torch.sigmoid(conv2d(hx, weights.reset_weight, weights.reset_bias, padding=1))
    rx = torch.cat([r * hidden, input], dim=1)
    q = torch.tanh(conv2d(rx, weights.candidate_weight, weights.candidate_bias, padding=1))
    return (1 - z) * hidden + z * q


def channel_attention(
    input: Tensor,
    reduction: int,
    fc1_weight: Tensor,
    fc1_bias: Tensor,
    fc2_weight: Tensor,
    fc2_bias: Tensor,
) -> Tensor:
    """Squeeze-excite channel gating.

    Global average pool -> FC(C -> C/reduction) -> ReLU -> FC(-> C) ->
    sigmoid -> per-channel rescale of the input.

    Raises:
        InvalidConfig: If C is not divisible by ``reduction``
        ShapeError: If the FC weights do not match C and C/reduction
    """
    _require_ndim("channel_attention input", input, 4, "NCHW")
    channels = input.shape[1]
    if reduction < 1 or channels % reduction != 0:
        raise InvalidConfig(f"{channels} channels not divisible by reduction {reduction}")
    squeezed = channels // reduction
    if fc1_weight.shape != (squeezed, channels) or fc2_weight.shape != (channels, squeezed):
        raise ShapeError(
            f"attention weights {tuple(fc1_weight.shape)}, {tuple(fc2_weight.shape)} do not "
            f"match {channels} -> {squeezed} -> {channels}"
        )
    pooled = input.mean(dim=(2, 3))
    squeeze = F.relu(F.linear(pooled, fc1_weight, fc1_bias))
    gate = torch.sigmoid(F.linear(squeeze, fc2_weight, fc2_bias))
    return input * gate[:, :, None, None]


def softmax(input: Tensor, dim: int = -1) -> Tensor:
    """Softmax along ``dim`` with max subtraction."""
    shifted = input - input.amax(dim=dim, keepdim=True).detach()
    exp = torch.exp(shifted)
    return exp / exp.sum(dim=dim, keepdim=True)


def init_weights_(module: nn.Module) -> None:
    """Fan-in scaled uniform weights and zero biases for conv/linear layers."""
    for layer in module.modules():
        if isinstance(layer, (nn.Conv2d, nn.Conv3d, nn.Linear)):
            fan_in = layer.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(layer.weight, -bound, bound)
            if layer.bias is not None:
                nn.init.zeros_(layer.bias)
