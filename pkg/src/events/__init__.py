"""Event streams, window splitting and voxel-grid encoding."""

from src.events.stream import Event, EventStream
from src.events.voxel import (
    VoxelGrid,
    WindowSet,
    normalize_timestamps,
    split_recording,
    split_stream,
    split_windows,
    voxelize,
)

__all__ = [
    "Event",
    "EventStream",
    "VoxelGrid",
    "WindowSet",
    "normalize_timestamps",
    "split_recording",
    "split_stream",
    "split_windows",
    "voxelize",
]
