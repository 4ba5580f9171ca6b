"""Binary flow file (``FLO2``).

Layout: ASCII magic ``FLO2``, little-endian uint32 width and height, then
width * height * 2 little-endian float32 values interleaved as (dx, dy) in
row-major order. Invalid ground-truth pixels hold NaN in both components.
"""

from pathlib import Path

import numpy as np

from src.core.errors import FlowFileError, ShapeError

MAGIC = b"FLO2"
_HEADER = np.dtype([("magic", "S4"), ("width", "<u4"), ("height", "<u4")])


def write_flow(path: Path, flow: np.ndarray) -> None:
    """Write a (2, H, W) flow field.

    Raises:
        ShapeError: If ``flow`` is not (2, H, W)
    """
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ShapeError(f"flow must be (2, H, W), got {flow.shape}")
    _, height, width = flow.shape
    header = np.array([(MAGIC, width, height)], dtype=_HEADER)
    payload = np.ascontiguousarray(np.moveaxis(flow, 0, -1), dtype="<f4")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(payload.tobytes())


def read_flow(path: Path) -> np.ndarray:
    """Read a flow file into a float32 (2, H, W) array.

    Raises:
        FlowFileError: If the file is missing, truncated or has a bad magic
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FlowFileError(f"cannot read flow file {path}: {e}") from e

    if len(data) < _HEADER.itemsize:
        raise FlowFileError(f"{path}: truncated header")
    header = np.frombuffer(data, dtype=_HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise FlowFileError(f"{path}: bad magic {header['magic']!r}")

    width, height = int(header["width"]), int(header["height"])
    expected = _HEADER.itemsize + width * height * 2 * 4
    if len(data) != expected:
        raise FlowFileError(f"{path}: expected {expected} bytes, found {len(data)}")

    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.itemsize)
    return np.moveaxis(values.reshape(height, width, 2), -1, 0).astype(np.float32)


def valid_mask(flow: np.ndarray) -> np.ndarray:
    """Pixels whose two flow components are both finite."""
    return np.isfinite(flow).all(axis=0)
