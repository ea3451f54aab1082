"""Segmentation scoring (IoU / mIoU) and the channel cosine-diversity statistic."""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError, ShapeError, ValidationError
from .io import IGNORE_ID, LabelArray


class ConfusionMatrix:
    """K x K tally with rows = ground truth, columns = prediction.

    Points whose gt or pred id equals ``ignore_id`` are excluded.  Matrices
    built on separate workers can be combined with :func:`merge`.
    """

    def __init__(self, num_classes: int, ignore_id: int = IGNORE_ID):
        if num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        self.ignore_id = ignore_id
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, gt, pred) -> "ConfusionMatrix":
        gt = gt.semantic if isinstance(gt, LabelArray) else np.asarray(gt).reshape(-1)
        pred = pred.semantic if isinstance(pred, LabelArray) else np.asarray(pred).reshape(-1)
        if gt.shape != pred.shape:
            raise ShapeError(f"gt has {gt.shape[0]} points but pred has {pred.shape[0]}")
        keep = (gt != self.ignore_id) & (pred != self.ignore_id)
        gt, pred = gt[keep], pred[keep]
        if gt.size and (gt.min() < 0 or gt.max() >= self.num_classes):
            raise ValidationError(f"gt ids outside [0, {self.num_classes})")
        if pred.size and (pred.min() < 0 or pred.max() >= self.num_classes):
            raise ValidationError(f"pred ids outside [0, {self.num_classes})")
        np.add.at(self.counts, (gt, pred), 1)
        return self

    def total(self) -> int:
        return int(self.counts.sum())

    def defined_classes(self) -> np.ndarray:
        """Classes present in gt or pred; only these have a defined IoU."""
        present = (self.counts.sum(axis=1) + self.counts.sum(axis=0)) > 0
        return np.flatnonzero(present)

    def iou(self, k: int) -> float:
        if not 0 <= k < self.num_classes:
            raise ValidationError(f"class {k} outside [0, {self.num_classes})")
        tp = self.counts[k, k]
        denom = self.counts[k, :].sum() + self.counts[:, k].sum() - tp
        if denom == 0:
            raise EvaluationError(f"IoU undefined for class {k}: absent from gt and pred")
        return float(tp / denom)

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where undefined."""
        out = np.full(self.num_classes, np.nan)
        for k in self.defined_classes():
            out[k] = self.iou(int(k))
        return out

    def miou(self) -> float:
        defined = self.defined_classes()
        if defined.size == 0:
            raise EvaluationError("mIoU undefined: no class appears in gt or pred")
        return float(np.mean([self.iou(int(k)) for k in defined]))


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    if a.num_classes != b.num_classes or a.ignore_id != b.ignore_id:
        raise ValidationError("cannot merge confusion matrices with different configs")
    out = ConfusionMatrix(a.num_classes, a.ignore_id)
    out.counts = a.counts + b.counts
    return out


def channel_cosine_distance(m: np.ndarray) -> float:
    """Mean pairwise channel dissimilarity: (1/C^2) sum_ij (1 - cos(M_i, M_j)) / 2.

    Cosines are taken over flattened H*W values across all C^2 ordered pairs,
    the i = j pairs included.  Any pair involving a zero-norm channel
    contributes cos = 0; bitwise-identical channels contribute cos = 1 exactly.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got {m.shape}")
    c = m.shape[0]
    if c == 0:
        raise ValidationError("need at least one channel")
    flat = m.reshape(c, -1)
    dots = flat @ flat.T
    norms_sq = np.einsum("ij,ij->i", flat, flat)
    denom = np.sqrt(np.outer(norms_sq, norms_sq))
    cos = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 0.0)
    cos = np.clip(cos, -1.0, 1.0)
    # cos(v, v) = 1 exactly; rounding in the dot/norm path would otherwise
    # leave identical channels a few ulp short of 1.
    nonzero = norms_sq > 0.0
    for i, j in np.argwhere((cos >= 1.0 - 1e-9) & np.outer(nonzero, nonzero)):
        if i == j or np.array_equal(flat[i], flat[j]):
            cos[i, j] = 1.0
    return float(np.mean((1.0 - cos) / 2.0))
