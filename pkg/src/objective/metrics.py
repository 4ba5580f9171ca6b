"""Optical-flow evaluation metrics: EPE, AE, nPE and outlier percentage.

Flows are channel-first, ``(2, H, W)`` or ``(N, 2, H, W)``, as numpy arrays
or torch tensors. Masks drop the channel axis. Pixels whose ground truth is
not finite are always excluded.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Union

import numpy as np
import torch

from src.core.errors import EmptyGroundTruth, InvalidConfig, ShapeError

ArrayLike = Union[np.ndarray, torch.Tensor]

NPE_THRESHOLDS = (1, 2, 3)
OUTLIER_PIXELS = 3.0
OUTLIER_RELATIVE = 0.05


def _to_numpy(array: ArrayLike) -> np.ndarray:
    if isinstance(array, torch.Tensor):
        array = array.detach().cpu().numpy()
    return np.asarray(array, dtype=np.float64)


def _prepare(
    pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike]
) -> tuple[np.ndarray, np.ndarray]:
    """Return valid (M, 2) prediction and ground-truth vectors."""
    pred_np, gt_np = _to_numpy(pred), _to_numpy(gt)
    if pred_np.shape != gt_np.shape:
        raise ShapeError(f"prediction {pred_np.shape} and ground truth {gt_np.shape} differ")
    if pred_np.ndim not in (3, 4) or pred_np.shape[-3] != 2:
        raise ShapeError(f"flow must be (2, H, W) or (N, 2, H, W), got {pred_np.shape}")

    valid = np.isfinite(gt_np).all(axis=-3)
    if mask is not None:
        mask_np = _to_numpy(mask).astype(bool)
        if mask_np.shape != valid.shape:
            raise ShapeError(f"mask {mask_np.shape} does not match flow {gt_np.shape}")
        valid &= mask_np
    if not valid.any():
        raise EmptyGroundTruth("no valid ground-truth pixels")

    pred_v = np.moveaxis(pred_np, -3, -1)[valid]
    gt_v = np.moveaxis(gt_np, -3, -1)[valid]
    return pred_v, gt_v


def _endpoint(pred_v: np.ndarray, gt_v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((pred_v - gt_v) ** 2, axis=-1))


def _angles(pred_v: np.ndarray, gt_v: np.ndarray) -> np.ndarray:
    dot = 1.0 + np.sum(pred_v * gt_v, axis=-1)
    norms = np.sqrt(1.0 + np.sum(pred_v**2, axis=-1)) * np.sqrt(1.0 + np.sum(gt_v**2, axis=-1))
    return np.degrees(np.arccos(np.clip(dot / norms, -1.0, 1.0)))


def _outliers(error: np.ndarray, gt_v: np.ndarray) -> np.ndarray:
    magnitude = np.sqrt(np.sum(gt_v**2, axis=-1))
    return (error > OUTLIER_PIXELS) & (error > OUTLIER_RELATIVE * magnitude)


def epe(pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike] = None) -> float:
    """Mean end-point error in pixels."""
    pred_v, gt_v = _prepare(pred, gt, mask)
    return float(np.mean(_endpoint(pred_v, gt_v)))


def angular_error(pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike] = None) -> float:
    """Mean angle in degrees between the homogeneous vectors (u, v, 1)."""
    pred_v, gt_v = _prepare(pred, gt, mask)
    return float(np.mean(_angles(pred_v, gt_v)))


def npe(pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike] = None, n: float = 1) -> float:
    """Percent of valid pixels with end-point error strictly above ``n``."""
    if n <= 0:
        raise InvalidConfig(f"n must be positive, got {n}")
    pred_v, gt_v = _prepare(pred, gt, mask)
    return float(100.0 * np.mean(_endpoint(pred_v, gt_v) > n))


def outlier_pct(pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike] = None) -> float:
    """Percent of pixels with EPE above 3 px and above 5% of the ground-truth magnitude."""
    pred_v, gt_v = _prepare(pred, gt, mask)
    return float(100.0 * np.mean(_outliers(_endpoint(pred_v, gt_v), gt_v)))


@dataclass
class MetricReport:
    """Aggregate flow metrics over the valid pixels of one or more samples."""

    epe: float
    ae: float
    npe: dict[int, float] = field(default_factory=dict)
    outlier_pct: float = 0.0
    valid_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping with nPE keys spelled ``1pe``, ``2pe``, ``3pe``."""
        data = asdict(self)
        thresholds = data.pop("npe")
        flat: dict[str, Any] = {"epe": data["epe"], "ae": data["ae"]}
        for n, value in sorted(thresholds.items()):
            flat[f"{n}pe"] = value
        flat["outlier_pct"] = data["outlier_pct"]
        flat["valid_count"] = data["valid_count"]
        return flat


def evaluate(pred: ArrayLike, gt: ArrayLike, mask: Optional[ArrayLike] = None) -> MetricReport:
    """Every metric in one pass over the valid pixels."""
    pred_v, gt_v = _prepare(pred, gt, mask)
    error = _endpoint(pred_v, gt_v)
    return MetricReport(
        epe=float(np.mean(error)),
        ae=float(np.mean(_angles(pred_v, gt_v))),
        npe={n: float(100.0 * np.mean(error > n)) for n in NPE_THRESHOLDS},
        outlier_pct=float(100.0 * np.mean(_outliers(error, gt_v))),
        valid_count=int(error.size),
    )
