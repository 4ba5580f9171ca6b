"""Event stream container.

An ``EventStream`` holds the events of one sensor window as parallel NumPy
columns (x, y, t, p) together with the sensor size and the window bounds in
microseconds. Columns are immutable after construction; every transform
returns a new stream.
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from src.core.errors import InputError, OutOfBounds


@dataclass(frozen=True)
class Event:
    """A single polarity event.

    Attributes:
        x: Pixel column
        y: Pixel row
        t: Timestamp in microseconds
        p: Polarity, -1 or +1
    """

    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Events of one sensor window stored column-wise.

    Event order is not enforced: voxelization is order-independent, so
    shuffled streams are accepted. ``is_sorted`` reports whether timestamps
    are nondecreasing.

    Attributes:
        xs: Pixel columns (int64)
        ys: Pixel rows (int64)
        ts: Timestamps in microseconds (int64)
        ps: Polarities in {-1, +1} (int8)
        width: Sensor width in pixels
        height: Sensor height in pixels
        t_start: Window start in microseconds
        t_end: Window end in microseconds
    """

    xs: np.ndarray
    ys: np.ndarray
    ts: np.ndarray
    ps: np.ndarray
    width: int
    height: int
    t_start: int
    t_end: int

    def __post_init__(self) -> None:
        columns = {
            "xs": np.array(self.xs, dtype=np.int64).reshape(-1),
            "ys": np.array(self.ys, dtype=np.int64).reshape(-1),
            "ts": np.array(self.ts, dtype=np.int64).reshape(-1),
            "ps": np.array(self.ps, dtype=np.int64).reshape(-1),
        }
        lengths = {len(col) for col in columns.values()}
        if len(lengths) != 1:
            raise InputError(f"event columns have different lengths: {sorted(lengths)}")
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"invalid sensor size {self.width}x{self.height}")
        if self.t_end < self.t_start:
            raise InputError(f"window end {self.t_end} precedes start {self.t_start}")
        if not np.isin(columns["ps"], (-1, 1)).all():
            raise InputError("polarities must be -1 or +1")
        columns["ps"] = columns["ps"].astype(np.int8)

        for name, col in columns.items():
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    @classmethod
    def from_events(
        cls,
        events: list[Event],
        width: int,
        height: int,
        t_start: Optional[int] = None,
        t_end: Optional[int] = None,
    ) -> "EventStream":
        """Build a stream from Event records.

        Window bounds default to the first/last timestamps (0 when empty).
        """
        ts = [e.t for e in events]
        return cls(
            xs=np.array([e.x for e in events], dtype=np.int64),
            ys=np.array([e.y for e in events], dtype=np.int64),
            ts=np.array(ts, dtype=np.int64),
            ps=np.array([e.p for e in events], dtype=np.int64),
            width=width,
            height=height,
            t_start=min(ts, default=0) if t_start is None else t_start,
            t_end=max(ts, default=0) if t_end is None else t_end,
        )

    @classmethod
    def empty(cls, width: int, height: int, t_start: int = 0, t_end: int = 0) -> "EventStream":
        """Stream without events."""
        return cls.from_events([], width, height, t_start, t_end)

    def __len__(self) -> int:
        return len(self.ts)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.xs, self.ys, self.ts, self.ps):
            yield Event(int(x), int(y), int(t), int(p))

    @property
    def duration_us(self) -> int:
        return self.t_end - self.t_start

    @property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.ts) >= 0))

    def check_bounds(self) -> None:
        """Verify every event lies inside the sensor and the time window.

        Raises:
            OutOfBounds: On the first offending coordinate or timestamp
        """
        if len(self) == 0:
            return
        bad = (self.xs < 0) | (self.xs >= self.width) | (self.ys < 0) | (self.ys >= self.height)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise OutOfBounds(
                f"event {i} at ({self.xs[i]}, {self.ys[i]}) outside "
                f"{self.width}x{self.height} sensor"
            )
        late = (self.ts < self.t_start) | (self.ts > self.t_end)
        if np.any(late):
            i = int(np.argmax(late))
            raise OutOfBounds(
                f"event {i} at t={self.ts[i]} outside window [{self.t_start}, {self.t_end}]"
            )

    def select(self, mask: np.ndarray, t_start: int, t_end: int) -> "EventStream":
        """Sub-stream of the events where ``mask`` is true, with new bounds."""
        return EventStream(
            xs=self.xs[mask],
            ys=self.ys[mask],
            ts=self.ts[mask],
            ps=self.ps[mask],
            width=self.width,
            height=self.height,
            t_start=t_start,
            t_end=t_end,
        )

    def sorted(self) -> "EventStream":
        """Stable sort by timestamp."""
        order = np.argsort(self.ts, kind="stable")
        return self._reordered(order)

    def permuted(self, rng: np.random.Generator) -> "EventStream":
        order = rng.permutation(len(self))
        return self._reordered(order)

    def _reordered(self, order: np.ndarray) -> "EventStream":
        return self._replace(
            xs=self.xs[order], ys=self.ys[order], ts=self.ts[order], ps=self.ps[order]
        )

    def flipped_polarity(self) -> "EventStream":
        return self._replace(ps=-self.ps)

    def hflip(self) -> "EventStream":
        """Mirror columns: x -> width - 1 - x."""
        return self._replace(xs=self.width - 1 - self.xs)

    def vflip(self) -> "EventStream":
        """Mirror rows: y -> height - 1 - y."""
        return self._replace(ys=self.height - 1 - self.ys)

    def _replace(self, **columns: np.ndarray) -> "EventStream":
        values = {"xs": self.xs, "ys": self.ys, "ts": self.ts, "ps": self.ps, **columns}
        return EventStream(
            width=self.width,
            height=self.height,
            t_start=self.t_start,
            t_end=self.t_end,
            **values,
        )

    @staticmethod
    def concatenate(streams: list["EventStream"]) -> "EventStream":
        """Join streams of one sensor; bounds span all inputs."""
        if not streams:
            raise InputError("cannot concatenate zero streams")
        first = streams[0]
        return EventStream(
            xs=np.concatenate([s.xs for s in streams]),
            ys=np.concatenate([s.ys for s in streams]),
            ts=np.concatenate([s.ts for s in streams]),
            ps=np.concatenate([s.ps for s in streams]),
            width=first.width,
            height=first.height,
            t_start=min(s.t_start for s in streams),
            t_end=max(s.t_end for s in streams),
        )
