"""Multi-scale temporal feature difference layer.

Pipeline per refinement iteration:

1. warp window i towards the reference with (i/g) * flow (linear motion),
2. former features: bias-free 1x1 reduction d -> d/r, shared over windows,
3. latter features: bias-free depthwise 3x3 convolution of the formers,
4. per stride s: D_j = latter[(j+1)s] - former[js] for j < floor(g/s),
5. per stride: collapse the temporal stack into one 2D map,
6. fuse strides with softmax scale weights and a 1x1 projection -> F_D.
"""

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.autodiff.ops import softmax, warp
from src.core.errors import InvalidConfig, ShapeError
from src.model.blocks import ConvGRU, DWSepConv3d


def scale_flow(flow: Tensor, i: int, g: int) -> Tensor:
    """Flow to window i of g under linear motion: (i/g) * flow.

    Raises:
        InvalidConfig: If i is outside [1, g]
    """
    if not 1 <= i <= g:
        raise InvalidConfig(f"window index {i} outside [1, {g}]")
    return flow * (i / g)


def warp_factors(g: int) -> list[float]:
    """Scale factors i/g for windows 1..g."""
    if g < 1:
        raise InvalidConfig(f"window count g must be >= 1, got {g}")
    return [i / g for i in range(1, g + 1)]


def warp_all(features: Tensor, flow: Tensor) -> Tensor:
    """Warp windows 1..g towards the reference; window 0 is passed through.

    Args:
        features: (N, g+1, C, h, w) fine-level features
        flow: (N, 2, h, w) current fine-level flow

    Returns:
        Warped features, same shape as ``features``
    """
    if features.ndim != 5:
        raise ShapeError(f"features must be (N, g+1, C, h, w), got {tuple(features.shape)}")
    batch, count = features.shape[:2]
    g = count - 1
    if g < 1:
        return features

    factors = torch.tensor(warp_factors(g), dtype=flow.dtype, device=flow.device)
    flows = flow.unsqueeze(1) * factors.view(1, g, 1, 1, 1)
    warped = warp(features[:, 1:].flatten(0, 1), flows.flatten(0, 1))
    return torch.cat([features[:, :1], warped.unflatten(0, (batch, g))], dim=1)


class FormerLatter(nn.Module):
    """Shared reduction (former) and depthwise transform (latter) over windows."""

    def __init__(self, channels: int, reduction: int = 1, use_former_conv: bool = True) -> None:
        super().__init__()
        if reduction < 1 or channels % reduction != 0:
            raise InvalidConfig(f"{channels} channels not divisible by reduction {reduction}")
        if not use_former_conv and reduction != 1:
            raise InvalidConfig("reduction requires the former convolution")
        self.out_channels = channels // reduction
        self.former: nn.Module = (
            nn.Conv2d(channels, self.out_channels, 1, bias=False)
            if use_former_conv
            else nn.Identity()
        )
        self.latter = nn.Conv2d(
            self.out_channels, self.out_channels, 3, padding=1, groups=self.out_channels, bias=False
        )

    def identity_latter_(self) -> None:
        """Set the depthwise kernel to the identity (centre tap 1)."""
        with torch.no_grad():
            self.latter.weight.zero_()
            self.latter.weight[:, 0, 1, 1] = 1.0

    def forward(self, warped: Tensor) -> tuple[Tensor, Tensor]:
        batch, count = warped.shape[:2]
        formers = self.former(warped.flatten(0, 1))
        latters = self.latter(formers)
        return formers.unflatten(0, (batch, count)), latters.unflatten(0, (batch, count))


def difference_count(g: int, stride: int) -> int:
    """Number of difference maps at a stride: floor(g / s)."""
    if not 1 <= stride <= g:
        raise InvalidConfig(f"stride {stride} outside [1, {g}]")
    return g // stride


def temporal_differences(formers: Tensor, latters: Tensor, stride: int) -> Tensor:
    """Stack D_j = latter[(j+1)s] - former[js] along a temporal axis.

    Args:
        formers: (N, g+1, c, h, w)
        latters: (N, g+1, c, h, w)
        stride: Sampling stride s in [1, g]

    Returns:
        (N, c, floor(g/s), h, w)
    """
    if formers.shape != latters.shape:
        raise ShapeError(f"formers {tuple(formers.shape)} != latters {tuple(latters.shape)}")
    g = formers.shape[1] - 1
    count = difference_count(g, stride)
    later = latters[:, stride : (count + 1) * stride : stride]
    earlier = formers[:, 0 : count * stride : stride]
    return (later - earlier).transpose(1, 2)


class ScaleAggregator(nn.Module):
    """Collapse one stride's (N, c, T_s, h, w) stack into an (N, d, h, w) map.

    Styles:
        dwconv3d: two depthwise separable 3D convolutions; the second spans the
            whole temporal extent without temporal padding
        add: sum over time, then a 3x3 convolution
        concat: stack time on channels, then a 3x3 convolution
        gru: convolutional GRU over time, final hidden state
    """

    def __init__(
        self, in_channels: int, out_channels: int, steps: int, style: str = "dwconv3d"
    ) -> None:
        super().__init__()
        self.style = style
        self.steps = steps
        if style == "dwconv3d":
            self.layer1 = DWSepConv3d(in_channels, out_channels, (3, 3, 3), (1, 1, 1))
            self.layer2 = DWSepConv3d(out_channels, out_channels, (steps, 3, 3), (0, 1, 1))
        elif style == "add":
            self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        elif style == "concat":
            self.conv = nn.Conv2d(in_channels * steps, out_channels, 3, padding=1, bias=False)
        elif style == "gru":
            self.gru = ConvGRU(in_channels, out_channels)
        else:
            raise InvalidConfig(f"unknown difference style {style!r}")

    def forward(self, stack: Tensor) -> Tensor:
        if stack.ndim != 5 or stack.shape[2] != self.steps:
            raise ShapeError(
                f"expected (N, C, {self.steps}, h, w) difference stack, got {tuple(stack.shape)}"
            )
        if self.style == "dwconv3d":
            return self.layer2(F.relu(self.layer1(stack))).squeeze(2)
        if self.style == "add":
            return self.conv(stack.sum(dim=2))
        if self.style == "concat":
            return self.conv(stack.flatten(1, 2))

        hidden = stack.new_zeros(stack.shape[0], self.gru.hidden_dim, *stack.shape[-2:])
        for t in range(self.steps):
            hidden = self.gru(hidden, stack[:, :, t])
        return hidden


class ScaleFusion(nn.Module):
    """Softmax-weighted sum of per-scale maps followed by a 1x1 projection."""

    def __init__(self, channels: int, scales: int, use_attention: bool = True) -> None:
        super().__init__()
        self.scales = scales
        self.use_attention = use_attention
        if use_attention:
            self.fc1 = nn.Linear(scales * channels, channels)
            self.fc2 = nn.Linear(channels, scales)
        self.proj = nn.Conv2d(channels, channels, 1)

    def scale_weights(self, per_scale: list[Tensor]) -> Tensor:
        """(N, S) weights summing to 1 over scales."""
        batch = per_scale[0].shape[0]
        if not self.use_attention:
            return per_scale[0].new_full((batch, self.scales), 1.0 / self.scales)
        pooled = torch.stack([d.mean(dim=(2, 3)) for d in per_scale], dim=1)
        logits = self.fc2(F.relu(self.fc1(pooled.flatten(1))))
        return softmax(logits, dim=1)

    def combine(self, per_scale: list[Tensor]) -> tuple[Tensor, Tensor]:
        """Weighted sum before the projection, and the weights."""
        if len(per_scale) != self.scales:
            raise ShapeError(f"expected {self.scales} scale maps, got {len(per_scale)}")
        weights = self.scale_weights(per_scale)
        stacked = torch.stack(per_scale, dim=1)
        return (stacked * weights[:, :, None, None, None]).sum(dim=1), weights

    def forward(self, per_scale: list[Tensor]) -> Tensor:
        fused, _ = self.combine(per_scale)
        return self.proj(fused)


class DifferenceLayer(nn.Module):
    """Warp, former/latter, strided differences, aggregation and scale fusion.

    Args:
        channels: Fine-level feature channels d
        g: Current-stream window count
        scales: Sampling strides, each in [1, g]
        reduction: Former channel reduction r
        style: Per-scale aggregation style
        use_scale_attention: Softmax scale weights (else uniform)
        use_former_conv: Apply the 1x1 reduction convolution
    """

    def __init__(
        self,
        channels: int,
        g: int,
        scales: list[int],
        reduction: int = 1,
        style: str = "dwconv3d",
        use_scale_attention: bool = True,
        use_former_conv: bool = True,
    ) -> None:
        super().__init__()
        if not scales:
            raise InvalidConfig("at least one stride is required")
        self.g = g
        self.scales = list(scales)
        self.steps = [difference_count(g, s) for s in self.scales]
        self.former_latter = FormerLatter(channels, reduction, use_former_conv)
        reduced = self.former_latter.out_channels
        self.aggregators = nn.ModuleList(
            [ScaleAggregator(reduced, channels, steps, style) for steps in self.steps]
        )
        self.fusion = ScaleFusion(channels, len(self.scales), use_scale_attention)

    def pre_projection(
        self, features: Tensor, flow: Tensor
    ) -> tuple[Tensor, Tensor, list[Tensor]]:
        """Fused map before the final 1x1 projection, scale weights and per-scale maps."""
        if features.shape[1] != self.g + 1:
            raise ShapeError(f"expected {self.g + 1} windows, got {features.shape[1]}")
        formers, latters = self.former_latter(warp_all(features, flow))
        per_scale = [
            aggregate(temporal_differences(formers, latters, stride))
            for stride, aggregate in zip(self.scales, self.aggregators)
        ]
        fused, weights = self.fusion.combine(per_scale)
        return fused, weights, per_scale

    def forward(self, features: Tensor, flow: Tensor) -> Tensor:
        fused, _, _ = self.pre_projection(features, flow)
        return self.fusion.proj(fused)
