"""Voxel-grid encoding and temporal window splitting.

Each event spreads its polarity over the two temporal bins closest to its
normalized timestamp ``t* = (t - t_min) / (t_max - t_min) * (B - 1)`` with
weights ``max(0, 1 - |b - t*|)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from src.core.errors import EmptyWindow, InvalidConfig, ShapeError
from src.events.stream import EventStream


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """B-bin spatio-temporal event tensor of shape (B, H, W)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ShapeError(f"voxel grid must be (B, H, W), got {self.values.shape}")

    @property
    def bins(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True, eq=False)
class WindowSet:
    """The g+1 voxel grids of one sample; index 0 is the reference window.

    Attributes:
        grids: Voxel grids in time order
        g: Number of current-stream sub-windows
        dt_us: Duration of one sub-window in microseconds
    """

    grids: list[VoxelGrid]
    g: int
    dt_us: int

    def __post_init__(self) -> None:
        if len(self.grids) != self.g + 1:
            raise ShapeError(f"expected {self.g + 1} grids, got {len(self.grids)}")
        shapes = {grid.values.shape for grid in self.grids}
        if len(shapes) != 1:
            raise ShapeError(f"grids disagree in shape: {sorted(shapes)}")

    def to_array(self, dtype: type = np.float32) -> np.ndarray:
        """Stack into a (g+1, B, H, W) array."""
        return np.stack([grid.values for grid in self.grids]).astype(dtype)

    @classmethod
    def from_array(cls, array: np.ndarray, dt_us: int) -> "WindowSet":
        """Inverse of ``to_array``."""
        if array.ndim != 4:
            raise ShapeError(f"window array must be (g+1, B, H, W), got {array.shape}")
        return cls(
            grids=[VoxelGrid(np.array(grid, dtype=np.float64)) for grid in array],
            g=array.shape[0] - 1,
            dt_us=dt_us,
        )


def normalize_timestamps(stream: EventStream, bins: int) -> np.ndarray:
    """Map timestamps onto the continuous bin axis [0, B-1].

    Args:
        stream: Non-empty event stream
        bins: Number of temporal bins B

    Returns:
        float64 array of normalized timestamps t*

    Raises:
        EmptyWindow: If the stream has no events
        InvalidConfig: If bins < 1
    """
    if bins < 1:
        raise InvalidConfig(f"bins must be >= 1, got {bins}")
    if len(stream) == 0:
        raise EmptyWindow("cannot normalize timestamps of an empty stream")

    ts = stream.ts.astype(np.float64)
    t_min, t_max = ts.min(), ts.max()
    if t_max == t_min:
        # Degenerate window: all mass goes to bin 0.
        return np.zeros_like(ts)
    return (ts - t_min) / (t_max - t_min) * (bins - 1)


def temporal_weights(t_star: np.ndarray, bins: int) -> np.ndarray:
    """Dense (N, B) matrix of triangular weights max(0, 1 - |b - t*|)."""
    b = np.arange(bins, dtype=np.float64)
    return np.maximum(0.0, 1.0 - np.abs(b[None, :] - t_star[:, None]))


def voxelize(stream: EventStream, bins: int) -> VoxelGrid:
    """Encode a stream as a (B, H, W) voxel grid.

    Raises:
        OutOfBounds: If an event lies outside the sensor or window bounds
        InvalidConfig: If bins < 1
    """
    if bins < 1:
        raise InvalidConfig(f"bins must be >= 1, got {bins}")
    stream.check_bounds()

    grid = np.zeros((bins, stream.height, stream.width), dtype=np.float64)
    if len(stream) == 0:
        return VoxelGrid(grid)

    t_star = normalize_timestamps(stream, bins)
    left = np.floor(t_star).astype(np.int64)
    frac = t_star - left
    ps = stream.ps.astype(np.float64)

    # np.add.at accumulates repeated (b, y, x) indices
    lower = left < bins
    np.add.at(
        grid, (left[lower], stream.ys[lower], stream.xs[lower]), ps[lower] * (1.0 - frac[lower])
    )
    upper = (left + 1 < bins) & (frac > 0)
    np.add.at(grid, (left[upper] + 1, stream.ys[upper], stream.xs[upper]), ps[upper] * frac[upper])

    return VoxelGrid(grid)


def sub_window_bounds(t_start: int, t_end: int, g: int) -> list[tuple[int, int]]:
    """Integer bounds of g equal sub-windows covering [t_start, t_end]."""
    duration = t_end - t_start
    bounds = []
    for i in range(g):
        start = t_start + (i * duration) // g
        end = t_start + -((-(i + 1) * duration) // g)
        bounds.append((start, end))
    return bounds


def reference_bounds(t_start: int, t_end: int, g: int) -> tuple[int, int]:
    """Reference window preceding the current stream, one sub-window long."""
    return t_start - (t_end - t_start) // g, t_start


def split_windows(reference: EventStream, current: EventStream, g: int, bins: int) -> WindowSet:
    """Split the current stream into g sub-windows and voxelize all g+1 windows.

    Sub-windows are half-open ``[start, end)`` except the last, which is
    closed; an event on an interior boundary belongs to the later window.

    Args:
        reference: Reference-window events (grid 0)
        current: Current-stream events, split into grids 1..g
        g: Number of sub-windows
        bins: Temporal bins per grid

    Returns:
        WindowSet with g+1 grids

    Raises:
        InvalidConfig: If g < 1 or the current window has zero duration
        ShapeError: If the two streams come from different sensor sizes
    """
    if (reference.width, reference.height) != (current.width, current.height):
        raise ShapeError(
            f"reference sensor {reference.width}x{reference.height} differs from "
            f"current {current.width}x{current.height}"
        )

    windows = split_stream(current, g)
    grids = [voxelize(reference, bins)] + [voxelize(window, bins) for window in windows]
    duration = current.duration_us

    logger.debug(
        f"Split {len(current)} events into {g} windows of {duration / g:.1f} us "
        f"({len(reference)} reference events)"
    )
    return WindowSet(grids=grids, g=g, dt_us=duration // g)


def split_stream(current: EventStream, g: int) -> list[EventStream]:
    """Partition the current stream into its g sub-streams."""
    if g < 1:
        raise InvalidConfig(f"window count g must be >= 1, got {g}")
    duration = current.duration_us
    if duration <= 0:
        raise InvalidConfig(f"current window [{current.t_start}, {current.t_end}] has no duration")
    current.check_bounds()
    index = np.clip(((current.ts - current.t_start) * g) // duration, 0, g - 1)
    return [
        current.select(index == i, start, end)
        for i, (start, end) in enumerate(sub_window_bounds(current.t_start, current.t_end, g))
    ]


def split_recording(
    stream: EventStream,
    g: int,
    bins: int,
    t_start: Optional[int] = None,
    t_end: Optional[int] = None,
) -> WindowSet:
    """Window a single recording that holds both the reference and current events.

    The current stream is ``[t_start, t_end]`` and the reference window the
    sub-window-long interval before it. Without explicit bounds the current
    stream ends at the recording's end and the recording is assumed to span
    exactly reference plus current.

    Raises:
        InvalidConfig: If g < 1 or the resulting current window is empty
    """
    if g < 1:
        raise InvalidConfig(f"window count g must be >= 1, got {g}")
    t_end = stream.t_end if t_end is None else t_end
    if t_start is None:
        t_start = t_end - ((t_end - stream.t_start) * g) // (g + 1)
    if t_end <= t_start:
        raise InvalidConfig(f"current window [{t_start}, {t_end}] has no duration")

    ref_start, ref_end = reference_bounds(t_start, t_end, g)
    before = (stream.ts >= ref_start) & (stream.ts < ref_end)
    during = (stream.ts >= t_start) & (stream.ts <= t_end)
    return split_windows(
        stream.select(before, ref_start, ref_end), stream.select(during, t_start, t_end), g, bins
    )
