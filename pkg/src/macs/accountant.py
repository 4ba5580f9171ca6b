"""Closed-form multiply-accumulate and parameter accounting.

Convention: one multiply-accumulate is one MAC; additions, activations,
pooling and softmax are free; one bilinear sample costs 4 MACs per output
value. Per-iteration modules are charged once per refinement iteration and
per-window encoders once per window. The layer walk mirrors ``EDCFlow`` so
that the parameter total equals the built model's parameter count.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from loguru import logger

from src.core.config import ModelConfig
from src.core.errors import ScalingError, ShapeError

BILINEAR_MACS = 4
CONVEX_NEIGHBOURS = 9
CORR_HIDDEN = 96
FLOW_HEAD_HIDDEN = 128
MASK_HEAD_HIDDEN = 256
SLOPE_TOLERANCE = 0.1
DENSE_MARGIN = 50.0


@dataclass
class CostEntry:
    """Cost of one module.

    Attributes:
        macs: MACs of a single call
        params: Learnable parameters
        calls: Calls per forward pass
    """

    macs: int
    params: int
    calls: int = 1

    @property
    def total_macs(self) -> int:
        return self.macs * self.calls


@dataclass
class CostBreakdown:
    """Per-module costs of one forward pass on one sample."""

    height: int
    width: int
    entries: dict[str, CostEntry] = field(default_factory=dict)

    def add(self, name: str, macs: int, params: int, calls: int = 1) -> None:
        self.entries[name] = CostEntry(int(macs), int(params), int(calls))

    @property
    def total_macs(self) -> int:
        return sum(e.total_macs for e in self.entries.values())

    @property
    def total_params(self) -> int:
        return sum(e.params for e in self.entries.values())

    def group_macs(self, prefix: str) -> int:
        """MACs of a single call summed over entries whose name starts with ``prefix``."""
        return sum(e.macs for name, e in self.entries.items() if name.startswith(prefix))

    @property
    def cost_volume_macs(self) -> int:
        entry = self.entries.get("cost_volume")
        return entry.macs if entry else 0

    @property
    def difference_macs(self) -> int:
        """One application of the difference layer."""
        return self.group_macs("difference.")

    def to_dict(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "width": self.width,
            "entries": {
                name: {
                    "macs": e.macs,
                    "calls": e.calls,
                    "total_macs": e.total_macs,
                    "params": e.params,
                }
                for name, e in self.entries.items()
            },
            "total_macs": self.total_macs,
            "total_params": self.total_params,
        }


def conv_cost(
    in_channels: int,
    out_channels: int,
    kernel: int,
    out_pixels: int,
    groups: int = 1,
    bias: bool = True,
    kernel_volume: Optional[int] = None,
) -> tuple[int, int]:
    """(MACs, params) of a convolution producing ``out_pixels`` output positions."""
    taps = kernel_volume if kernel_volume is not None else kernel * kernel
    weights = out_channels * (in_channels // groups) * taps
    return weights * out_pixels, weights + (out_channels if bias else 0)


def linear_cost(in_features: int, out_features: int) -> tuple[int, int]:
    return in_features * out_features, in_features * out_features + out_features


def _residual_block(
    in_channels: int, out_channels: int, stride: int, pixels: int
) -> tuple[int, int]:
    """Cost of a residual block whose outputs cover ``pixels`` positions."""
    macs, params = conv_cost(in_channels, out_channels, 3, pixels)
    m, p = conv_cost(out_channels, out_channels, 3, pixels)
    macs, params = macs + m, params + p
    if stride != 1 or in_channels != out_channels:
        m, p = conv_cost(in_channels, out_channels, 1, pixels)
        macs, params = macs + m, params + p
    return macs, params


def encoder_cost(
    in_channels: int,
    stage_dims: tuple[int, int, int],
    height: int,
    width: int,
    fine_stride: int,
    fine_dim: int,
    coarse: bool,
) -> tuple[int, int]:
    """Cost of one ``FeatureEncoder`` call on an (in_channels, H, W) input."""
    depth = 3 if coarse or fine_stride == 8 else {2: 1, 4: 2}[fine_stride]
    pixels = (height // 2) * (width // 2)
    macs, params = conv_cost(in_channels, stage_dims[0], 3, pixels)

    previous = stage_dims[0]
    for level in range(depth):
        stride = 1 if level == 0 else 2
        pixels = (height // 2 ** (level + 1)) * (width // 2 ** (level + 1))
        for block_in, block_stride in ((previous, stride), (stage_dims[level], 1)):
            m, p = _residual_block(block_in, stage_dims[level], block_stride, pixels)
            macs, params = macs + m, params + p
        previous = stage_dims[level]

    fine_level = {2: 0, 4: 1, 8: 2}[fine_stride]
    width_at_fine = stage_dims[fine_level]
    if fine_dim != width_at_fine:
        fine_pixels = (height // fine_stride) * (width // fine_stride)
        m, p = conv_cost(width_at_fine, fine_dim, 1, fine_pixels)
        macs, params = macs + m, params + p
    return macs, params


def gru_cost(input_dim: int, hidden_dim: int, pixels: int) -> tuple[int, int]:
    macs, params = conv_cost(hidden_dim + input_dim, hidden_dim, 3, pixels)
    return 3 * macs, 3 * params


def _aggregator_cost(
    style: str, reduced: int, channels: int, steps: int, pixels: int
) -> tuple[int, int]:
    if style == "dwconv3d":
        costs = [
            conv_cost(
                reduced, reduced, 0, steps * pixels, groups=reduced, bias=False, kernel_volume=27
            ),
            conv_cost(reduced, channels, 1, steps * pixels, bias=False),
            conv_cost(
                channels, channels, 0, pixels, groups=channels, bias=False, kernel_volume=steps * 9
            ),
            conv_cost(channels, channels, 1, pixels, bias=False),
        ]
        return sum(c[0] for c in costs), sum(c[1] for c in costs)
    if style == "add":
        return conv_cost(reduced, channels, 3, pixels, bias=False)
    if style == "concat":
        return conv_cost(reduced * steps, channels, 3, pixels, bias=False)
    macs, params = gru_cost(reduced, channels, pixels)
    return steps * macs, params


def count_model(config: ModelConfig, height: int, width: int) -> CostBreakdown:
    """Per-module MACs and parameters of one forward pass on an H x W sample.

    Raises:
        ShapeError: If H or W is not divisible by 8
    """
    if height % 8 or width % 8 or height <= 0 or width <= 0:
        raise ShapeError(f"input size {height}x{width} is not divisible by 8")

    g, iterations = config.windows, config.iterations
    d, d_bar = config.feature_dim, config.corr_feature_dim
    stride = config.flow_stride
    stage_dims = (max(d // 2, 1), d, d_bar)
    fine = (height // stride) * (width // stride)
    coarse = (height // 8) * (width // 8)
    report = CostBreakdown(height=height, width=width)

    macs, params = encoder_cost(
        config.bins, stage_dims, height, width, stride, d, config.use_correlation
    )
    report.add("feature_encoder", macs, params, calls=g + 1)
    macs, params = encoder_cost(
        config.bins,
        stage_dims,
        height,
        width,
        stride,
        config.hidden_dim + config.context_dim,
        coarse=False,
    )
    report.add("context_encoder", macs, params)

    if config.use_correlation:
        report.add("cost_volume", coarse * coarse * d_bar, 0)
        factor = config.upsample_factor
        lookup = coarse * config.lookup_dim * BILINEAR_MACS
        if factor != 1:
            lookup += coarse * 2 * BILINEAR_MACS + fine * config.lookup_dim * BILINEAR_MACS
        report.add("correlation.lookup", lookup, 0, calls=iterations)
        m1, p1 = conv_cost(config.lookup_dim, CORR_HIDDEN, 3, fine)
        m2, p2 = conv_cost(CORR_HIDDEN, config.corr_dim, 3, fine)
        report.add("correlation.encoder", m1 + m2, p1 + p2, calls=iterations)

    if config.use_difference:
        reduced = config.reduced_dim
        report.add("difference.warp", g * d * fine * BILINEAR_MACS, 0, calls=iterations)
        macs = params = 0
        if config.use_former_conv:
            macs, params = conv_cost(d, reduced, 1, (g + 1) * fine, bias=False)
        m, p = conv_cost(reduced, reduced, 3, (g + 1) * fine, groups=reduced, bias=False)
        report.add("difference.former_latter", macs + m, params + p, calls=iterations)
        for scale in config.scales:
            m, p = _aggregator_cost(config.difference_style, reduced, d, g // scale, fine)
            report.add(f"difference.aggregate.s{scale}", m, p, calls=iterations)

        count = len(config.scales)
        macs, params = count * d * fine, 0
        if config.use_scale_attention:
            m1, p1 = linear_cost(count * d, d)
            m2, p2 = linear_cost(d, count)
            macs, params = macs + m1 + m2, params + p1 + p2
        m, p = conv_cost(d, d, 1, fine)
        report.add("difference.fusion", macs + m, params + p, calls=iterations)

    motion = config.motion_dim
    if config.use_channel_attention:
        squeezed = motion // config.attention_reduction
        m1, p1 = linear_cost(motion, squeezed)
        m2, p2 = linear_cost(squeezed, motion)
        report.add("motion_fusion", m1 + m2 + motion * fine, p1 + p2, calls=iterations)

    hidden = config.hidden_dim
    macs, params = gru_cost(motion + 2 + config.context_dim, hidden, fine)
    report.add("update.gru", macs, params, calls=iterations)
    m1, p1 = conv_cost(hidden, FLOW_HEAD_HIDDEN, 3, fine)
    m2, p2 = conv_cost(FLOW_HEAD_HIDDEN, 2, 3, fine)
    report.add("update.flow_head", m1 + m2, p1 + p2, calls=iterations)
    m1, p1 = conv_cost(hidden, MASK_HEAD_HIDDEN, 3, fine)
    m2, p2 = conv_cost(MASK_HEAD_HIDDEN, stride * stride * CONVEX_NEIGHBOURS, 1, fine)
    report.add("update.mask_head", m1 + m2, p1 + p2, calls=iterations)
    report.add("update.upsample", 2 * CONVEX_NEIGHBOURS * height * width, 0, calls=iterations)
    return report


def dense_volume_macs(config: ModelConfig, height: int, width: int) -> int:
    """MACs of a temporally dense all-pairs volume at flow resolution: g * N^2 * d_bar."""
    fine = (height // config.flow_stride) * (width // config.flow_stride)
    return config.windows * fine * fine * config.corr_feature_dim


def log_log_slope(xs: list[float], ys: list[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


@dataclass
class ScalingReport:
    """Measured complexity exponents of a configuration sweep.

    Attributes:
        sizes: Input sides (H = W) of the pixel-count sweep
        pixels: Coarse-level pixel counts N of the sweep
        cost_volume_slope: d log(cost-volume MACs) / d log N
        difference_slope: d log(difference-layer MACs) / d log N
        dense_ratios: Dense-volume MACs over difference-layer MACs per size
        dense_ratio_slope: d log(dense ratio) / d log N
        windows: g values of the window sweep
        difference_by_windows: Difference-layer MACs per g (single stride)
        dense_by_windows: Dense-volume MACs per g
    """

    sizes: list[int]
    pixels: list[int]
    cost_volume_slope: float
    difference_slope: float
    dense_ratios: list[float]
    dense_ratio_slope: float
    windows: list[int] = field(default_factory=list)
    difference_by_windows: list[int] = field(default_factory=list)
    dense_by_windows: list[int] = field(default_factory=list)

    @property
    def break_even_pixels(self) -> float:
        """Coarse-level pixel count from which the dense volume costs DENSE_MARGIN x the layer."""
        per_pixel = self.dense_ratios[0] / self.pixels[0]
        return DENSE_MARGIN / per_pixel

    def margin_sizes(self) -> list[int]:
        """Swept sides at or above the break-even pixel count."""
        threshold = self.break_even_pixels * (1 - 1e-9)
        return [side for side, n in zip(self.sizes, self.pixels) if n >= threshold]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sizes": self.sizes,
            "pixels": self.pixels,
            "cost_volume_slope": self.cost_volume_slope,
            "difference_slope": self.difference_slope,
            "dense_ratios": self.dense_ratios,
            "dense_ratio_slope": self.dense_ratio_slope,
            "windows": self.windows,
            "difference_by_windows": self.difference_by_windows,
            "dense_by_windows": self.dense_by_windows,
            "break_even_pixels": self.break_even_pixels,
            "margin_sizes": self.margin_sizes(),
        }


def _affine(xs: list[int], ys: list[int]) -> bool:
    if len(xs) < 3:
        return True
    slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    return all(
        math.isclose(y, ys[0] + slope * (x - xs[0]), rel_tol=1e-9) for x, y in zip(xs, ys)
    )


def verify_scaling(
    config: ModelConfig,
    sizes: tuple[int, ...] = (128, 256, 512),
    windows: tuple[int, ...] = (3, 5, 10),
    tolerance: float = SLOPE_TOLERANCE,
) -> ScalingReport:
    """Check the complexity exponents of the cost volume and the difference layer.

    The pixel sweep runs square inputs of the given sides. The window sweep
    uses a single stride so the difference layer is affine in g.

    Raises:
        ScalingError: If an exponent leaves its tolerance band, a window
            count is not linear, or a size at or above break-even keeps the
            dense volume under DENSE_MARGIN times the difference layer
    """
    if len(sizes) < 2:
        raise ScalingError("the pixel sweep needs at least two sizes")

    full = config.model_copy(update={"use_correlation": True, "use_difference": True})
    reports = [count_model(full, side, side) for side in sizes]
    pixels = [(side // 8) ** 2 for side in sizes]
    volume = [r.cost_volume_macs for r in reports]
    difference = [r.difference_macs for r in reports]
    ratios = [
        dense_volume_macs(full, side, side) / r.difference_macs for side, r in zip(sizes, reports)
    ]

    by_windows, dense = [], []
    for g in windows:
        swept = full.model_copy(update={"windows": g, "scales": [1]})
        by_windows.append(count_model(swept, sizes[0], sizes[0]).difference_macs)
        dense.append(dense_volume_macs(swept, sizes[0], sizes[0]))

    report = ScalingReport(
        sizes=list(sizes),
        pixels=pixels,
        cost_volume_slope=log_log_slope(pixels, volume),
        difference_slope=log_log_slope(pixels, difference),
        dense_ratios=ratios,
        dense_ratio_slope=log_log_slope(pixels, ratios),
        windows=list(windows),
        difference_by_windows=by_windows,
        dense_by_windows=dense,
    )
    logger.info(
        f"Cost-volume slope {report.cost_volume_slope:.3f}, "
        f"difference slope {report.difference_slope:.3f}"
    )

    for side, n, ratio in zip(report.sizes, report.pixels, report.dense_ratios):
        if side in report.margin_sizes() and ratio < DENSE_MARGIN * (1 - 1e-9):
            raise ScalingError(
                f"dense volume is only {ratio:.1f}x the difference layer at {side}x{side} "
                f"({n} coarse pixels, break-even {report.break_even_pixels:.0f})"
            )

    checks = {
        "cost volume": (report.cost_volume_slope, 2.0),
        "difference layer": (report.difference_slope, 1.0),
        "dense/difference ratio": (report.dense_ratio_slope, 1.0),
    }
    for name, (slope, expected) in checks.items():
        if abs(slope - expected) > tolerance:
            raise ScalingError(f"{name} slope {slope:.3f} outside {expected} +/- {tolerance}")
    if not _affine(list(windows), by_windows) or not _affine(list(windows), dense):
        raise ScalingError("difference-layer or dense-volume MACs are not linear in g")
    return report
