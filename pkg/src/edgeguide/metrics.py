"""Evaluation metrics for binarized masks: mean Dice and mean IoU.

Masks may be numpy arrays or torch tensors shaped [B, H, W, 1] or
[B, 1, H, W]; only binary {0, 1} values are accepted.  Per-image scores
use the empty-vs-empty convention of a perfect 1.0.
"""

from __future__ import annotations

import numpy as np
import torch

BINARIZE_THRESHOLD = 0.5


def binarize(probs) -> np.ndarray:
    """Threshold sigmoid outputs at 0.5 into a {0,1} float array."""
    if isinstance(probs, torch.Tensor):
        probs = probs.detach().cpu().numpy()
    return (np.asarray(probs) >= BINARIZE_THRESHOLD).astype(np.float64)


def _as_binary_batch(masks) -> np.ndarray:
    if isinstance(masks, torch.Tensor):
        masks = masks.detach().cpu().numpy()
    masks = np.asarray(masks)
    if masks.ndim != 4:
        raise ValueError(f"expected rank-4 mask batch, got shape {masks.shape}")
    if not np.isin(masks, (0, 1)).all():
        raise ValueError("masks must be binary {0,1}")
    return masks.reshape(masks.shape[0], -1).astype(np.float64)


def per_image_dice(pred_masks, gt_masks) -> np.ndarray:
    pred = _as_binary_batch(pred_masks)
    gt = _as_binary_batch(gt_masks)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shape mismatch: {pred.shape} vs {gt.shape}")
    inter = (pred * gt).sum(axis=1)
    sizes = pred.sum(axis=1) + gt.sum(axis=1)
    return np.where(sizes == 0, 1.0, 2.0 * inter / np.maximum(sizes, 1.0))


def per_image_iou(pred_masks, gt_masks) -> np.ndarray:
    pred = _as_binary_batch(pred_masks)
    gt = _as_binary_batch(gt_masks)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shape mismatch: {pred.shape} vs {gt.shape}")
    inter = (pred * gt).sum(axis=1)
    union = pred.sum(axis=1) + gt.sum(axis=1) - inter
    return np.where(union == 0, 1.0, inter / np.maximum(union, 1.0))


def mean_dice(pred_masks, gt_masks) -> float:
    return float(per_image_dice(pred_masks, gt_masks).mean())


def mean_iou(pred_masks, gt_masks) -> float:
    return float(per_image_iou(pred_masks, gt_masks).mean())
