"""Color-wheel PNG rendering of flow fields.

Hue encodes direction (atan2(dy, dx)), saturation encodes magnitude
normalized by its 99th percentile, value is 1; zero flow renders white.
"""

from pathlib import Path
from typing import Optional

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image

from src.core.errors import ShapeError
from src.storage.flow_file import valid_mask


def flow_to_rgb(flow: np.ndarray) -> np.ndarray:
    """Encode a (2, H, W) flow as an (H, W, 3) uint8 image.

    Invalid (NaN) pixels render black.
    """
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ShapeError(f"flow must be (2, H, W), got {flow.shape}")

    valid = valid_mask(flow)
    dx = np.where(valid, flow[0], 0.0).astype(np.float64)
    dy = np.where(valid, flow[1], 0.0).astype(np.float64)
    magnitude = np.hypot(dx, dy)

    scale = np.percentile(magnitude[valid], 99) if valid.any() else 0.0
    saturation = np.clip(magnitude / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(magnitude)
    hue = np.mod(np.arctan2(dy, dx) / (2 * np.pi), 1.0)
    value = np.where(valid, 1.0, 0.0)

    rgb = hsv_to_rgb(np.stack([hue, saturation, value], axis=-1))
    return np.round(rgb * 255).astype(np.uint8)


def error_to_gray(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-pixel end-point error as an (H, W) uint8 image (white = large)."""
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    valid = valid_mask(gt) & valid_mask(pred)
    error = np.where(valid, np.linalg.norm(np.nan_to_num(pred - gt), axis=0), 0.0)
    scale = np.percentile(error[valid], 99) if valid.any() else 0.0
    gray = np.clip(error / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(error)
    return np.round(gray * 255).astype(np.uint8)


def save_flow_png(path: Path, flow: np.ndarray, error_against: Optional[np.ndarray] = None) -> None:
    """Render ``flow`` (or its error map against ``error_against``) to PNG."""
    if error_against is None:
        image = Image.fromarray(flow_to_rgb(flow))
    else:
        image = Image.fromarray(error_to_gray(flow, error_against))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")
