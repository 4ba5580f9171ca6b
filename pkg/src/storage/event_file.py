"""Reader and writer for the ``EVT1`` event text format.

Layout::

    EVT1 <width> <height>
    x y t_us p
    ...

Window bounds are not stored in the file; callers pass them explicitly or
let them default to the first and last timestamps.
"""

from pathlib import Path
from typing import Optional

import numpy as np

from src.core.errors import EventFileError, InputError
from src.events.stream import EventStream

MAGIC = "EVT1"


def read_event_file(
    path: Path, t_start: Optional[int] = None, t_end: Optional[int] = None
) -> EventStream:
    """Parse an event text file.

    Args:
        path: File to read
        t_start: Window start (default: earliest timestamp)
        t_end: Window end (default: latest timestamp)

    Returns:
        EventStream with the file's events in file order

    Raises:
        EventFileError: If the file is missing or malformed
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise EventFileError(f"cannot read event file {path}: {e}") from e

    if not lines:
        raise EventFileError(f"{path}: empty file")

    header = lines[0].split()
    if len(header) != 3 or header[0] != MAGIC:
        raise EventFileError(f"{path}: expected '{MAGIC} <width> <height>' header")
    try:
        width, height = int(header[1]), int(header[2])
    except ValueError as e:
        raise EventFileError(f"{path}: non-integer sensor size in header") from e

    rows = [line.split() for line in lines[1:] if line.strip()]
    if any(len(row) != 4 for row in rows):
        bad = next(i for i, row in enumerate(rows) if len(row) != 4)
        raise EventFileError(f"{path}: event line {bad + 2} does not have 4 fields")
    try:
        table = np.array(rows, dtype=np.int64).reshape(-1, 4)
    except ValueError as e:
        raise EventFileError(f"{path}: non-integer event field") from e

    ts = table[:, 2]
    try:
        return EventStream(
            xs=table[:, 0],
            ys=table[:, 1],
            ts=ts,
            ps=table[:, 3],
            width=width,
            height=height,
            t_start=(int(ts.min()) if len(ts) else 0) if t_start is None else t_start,
            t_end=(int(ts.max()) if len(ts) else 0) if t_end is None else t_end,
        )
    except InputError as e:
        raise EventFileError(f"{path}: {e}") from e


def write_event_file(path: Path, stream: EventStream) -> None:
    """Write a stream in ``EVT1`` text format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MAGIC} {stream.width} {stream.height}\n")
        for x, y, t, p in zip(stream.xs, stream.ys, stream.ts, stream.ps):
            f.write(f"{x} {y} {t} {p}\n")
