"""Binarization and tolerance-matched precision / recall / F1."""
from typing import Tuple, Union

import cv2
import numpy as np

from crackSeg.config import config
from crackSeg.errors import DimensionError
from crackSeg.models.configs import ToleranceConfig
from crackSeg.tensor.tensor import Tensor


def binarize(pred: Union[Tensor, np.ndarray], threshold: float = config.BINARIZE_THRESHOLD) -> np.ndarray:
    """Strictly-greater threshold: 0.5 itself maps to background."""
    values = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    return (values > threshold).astype(np.uint8)


def _as_plane(mask: np.ndarray, what: str) -> np.ndarray:
    plane = np.asarray(mask)
    while plane.ndim > 2 and plane.shape[0] == 1:
        plane = plane[0]
    if plane.ndim != 2:
        raise DimensionError(f"{what} must be a single H x W mask, got shape {np.shape(mask)}")
    return (plane > 0).astype(np.uint8)


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a (2r+1) x (2r+1) square, the Chebyshev ball of radius r."""
    if radius == 0:
        return mask.copy()
    kernel = np.ones((2 * radius + 1, 2 * radius + 1), dtype=np.uint8)
    return cv2.dilate(mask, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)


def tolerant_counts(
    pred: np.ndarray, gt: np.ndarray, tol: ToleranceConfig = ToleranceConfig()
) -> Tuple[int, int, int, int]:
    """
    Count matches where a positive pixel within `tol.radius` of the other mask counts as a hit.

    Args:
        pred (np.ndarray): Binary prediction of one image (H x W, or 1 x H x W).
        gt (np.ndarray): Binary ground truth of the same shape.
        tol (ToleranceConfig): Matching radius.

    Returns:
        Tuple[int, int, int, int]: (tp_pr, fp, tp_re, fn). The first pair partitions predicted
        positives by whether they fall inside the dilated ground truth, the second partitions
        ground-truth positives by the dilated prediction.
    """
    pred_plane = _as_plane(pred, "prediction")
    gt_plane = _as_plane(gt, "ground truth")
    if pred_plane.shape != gt_plane.shape:
        raise DimensionError(f"Prediction {pred_plane.shape} and ground truth {gt_plane.shape} differ.")

    near_gt = dilate(gt_plane, tol.radius).astype(bool)
    near_pred = dilate(pred_plane, tol.radius).astype(bool)
    pred_pos = pred_plane.astype(bool)
    gt_pos = gt_plane.astype(bool)

    tp_pr = int(np.count_nonzero(pred_pos & near_gt))
    fp = int(np.count_nonzero(pred_pos & ~near_gt))
    tp_re = int(np.count_nonzero(gt_pos & near_pred))
    fn = int(np.count_nonzero(gt_pos & ~near_pred))
    return tp_pr, fp, tp_re, fn


def precision_recall_f1(tp_pr: int, fp: int, tp_re: int, fn: int) -> Tuple[float, float, float]:
    """
    Precision from the prediction side, recall from the ground-truth side.

    Zero denominators give 0, except an empty prediction against an empty ground truth,
    which scores 1 on all three.
    """
    if tp_pr + fp == 0 and tp_re + fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp_pr / (tp_pr + fp) if tp_pr + fp else 0.0
    recall = tp_re / (tp_re + fn) if tp_re + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
