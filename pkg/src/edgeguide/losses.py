"""Training objective: embedding guide loss plus deep-supervised seg loss.

The total objective is an unweighted sum of the guide term (mean squared
L2 distance between the two guidance embeddings) and the segmentation
term (BCE + dice summed over the supervised heads).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    guide: float
    seg: float
    total: float


def guide_loss(e_seg: torch.Tensor, e_sam: torch.Tensor) -> torch.Tensor:
    """Squared L2 distance summed over dims, averaged over the batch."""
    if e_seg.shape != e_sam.shape:
        raise ValueError(f"embedding shape mismatch: {tuple(e_seg.shape)} vs {tuple(e_sam.shape)}")
    return ((e_seg - e_sam) ** 2).sum(dim=1).mean()


def _check_mask_pair(logits: torch.Tensor, gt: torch.Tensor):
    if logits.shape != gt.shape:
        raise ValueError(f"logits/mask shape mismatch: {tuple(logits.shape)} vs {tuple(gt.shape)}")


def bce_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Numerically stable binary cross-entropy on logits, mean per pixel."""
    _check_mask_pair(logits, gt)
    uniq = torch.unique(gt)
    if not bool(((uniq == 0) | (uniq == 1)).all()):
        raise ValueError("ground truth masks must be binary {0,1}")
    return F.binary_cross_entropy_with_logits(logits, gt.to(logits.dtype))


def dice_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Soft dice on sigmoid probabilities, per image, averaged over batch."""
    _check_mask_pair(logits, gt)
    probs = torch.sigmoid(logits)
    dims = tuple(range(1, logits.ndim))
    inter = (probs * gt).sum(dim=dims)
    denom = probs.sum(dim=dims) + gt.sum(dim=dims)
    dice = (2.0 * inter + DICE_SMOOTH) / (denom + DICE_SMOOTH)
    return (1.0 - dice).mean()


def seg_loss(preds: list[torch.Tensor], gt: torch.Tensor) -> torch.Tensor:
    """BCE + dice summed over all supervised heads against the same mask."""
    if len(preds) == 0:
        raise ValueError("need at least one prediction head")
    total = preds[0].new_zeros(())
    for logits in preds:
        total = total + bce_loss(logits, gt) + dice_loss(logits, gt)
    return total


def total_loss(guide: float, seg: float) -> LossBreakdown:
    guide = float(guide)
    seg = float(seg)
    return LossBreakdown(guide=guide, seg=seg, total=guide + seg)
