"""Confusion-matrix accumulation and the two headline metrics.

One matrix shape serves both granularities: (C+1) x (C+1) int64 counts with
a synthetic background row/column at index C. Image-level accumulation
(one sample per image) feeds mean accuracy; pixel-level accumulation feeds
mean IoU, where background confusions enlarge the per-class union but
background itself is never averaged.

Classes without evidence are excluded rather than scored: a zero
ground-truth row drops a class from mean accuracy, a zero union drops it
from mean IoU. Excluded entries appear as NaN in the per-class vectors and
the evaluated-class count is reported alongside each mean.

Accumulators mutate in place and also return the matrix so calls chain;
`merge` sums two matrices into a fresh one, letting accumulation shard
across workers in any order.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    BadClassIndex,
    BadSentinel,
    DimensionMismatch,
    EmptyMatrix,
    ValidationError,
)
from .mask import BACKGROUND, IGNORE


class ConfusionMatrix:
    """(C+1) x (C+1) int64 counts; index C is the synthetic background."""

    __slots__ = ("num_classes", "counts")

    def __init__(self, num_classes: int, counts: np.ndarray | None = None) -> None:
        if num_classes < 1:
            raise ValidationError("num_classes must be positive")
        self.num_classes = int(num_classes)
        side = self.num_classes + 1
        if counts is None:
            self.counts = np.zeros((side, side), dtype=np.int64)
        else:
            counts = np.array(counts, dtype=np.int64, copy=True)
            if counts.shape != (side, side):
                raise ValidationError(f"counts shape {counts.shape} != ({side}, {side})")
            if (counts < 0).any():
                raise ValidationError("counts must be non-negative")
            self.counts = counts

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(
            self.counts, other.counts
        )

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.num_classes, self.counts)

    def to_csv(self) -> str:
        """C+1 rows of C+1 comma-separated integers, no header."""
        return "\n".join(",".join(str(int(v)) for v in row) for row in self.counts) + "\n"


def accumulate_image(cm: ConfusionMatrix, gt_class: int, pred_class: int) -> ConfusionMatrix:
    """Count one image-level (ground truth, prediction) pair.

    Background never appears at image level, so both indices must be < C.
    """
    C = cm.num_classes
    for name, value in (("gt", gt_class), ("pred", pred_class)):
        if not 0 <= int(value) < C:
            raise BadClassIndex(f"image-level {name} class {value} outside [0, {C})")
    cm.counts[int(gt_class), int(pred_class)] += 1
    return cm


def accumulate_pixels(cm: ConfusionMatrix, gt: np.ndarray, pred: np.ndarray) -> ConfusionMatrix:
    """Count every non-ignore pixel of a (gt, pred) mask pair.

    The background sentinel maps to index C. Ignore pixels in gt are
    skipped entirely; a prediction may not contain ignore at a counted
    pixel, and stray labels >= C are rejected.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise DimensionMismatch(f"gt shape {gt.shape} != pred shape {pred.shape}")
    C = cm.num_classes
    keep = gt != IGNORE
    g = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    if (p == IGNORE).any():
        raise BadSentinel("prediction contains ignore at a pixel counted in gt")
    for name, arr in (("gt", g), ("pred", p)):
        stray = (arr != BACKGROUND) & (arr >= C)
        if stray.any():
            value = int(arr[stray][0])
            raise BadSentinel(f"{name} label {value} is neither a sentinel nor < {C}")
    g[g == BACKGROUND] = C
    p[p == BACKGROUND] = C
    side = C + 1
    flat = np.bincount(g * side + p, minlength=side * side)
    cm.counts += flat.reshape(side, side)
    return cm


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Entrywise sum into a fresh matrix; associative and commutative."""
    if a.num_classes != b.num_classes:
        raise DimensionMismatch(
            f"cannot merge matrices over {a.num_classes} and {b.num_classes} classes"
        )
    return ConfusionMatrix(a.num_classes, a.counts + b.counts)


def mean_accuracy(cm: ConfusionMatrix) -> tuple[float, np.ndarray, int]:
    """Per-class recall averaged over classes with ground-truth samples.

    Returns (mAcc, per-class vector with NaN where excluded, evaluated count).
    """
    C = cm.num_classes
    fg = cm.counts[:C, :]
    row_sums = fg.sum(axis=1)
    per_class = np.full(C, np.nan)
    present = row_sums > 0
    if not present.any():
        raise EmptyMatrix("no image-level samples accumulated")
    diag = np.diagonal(cm.counts)[:C]
    per_class[present] = diag[present] / row_sums[present]
    evaluated = int(present.sum())
    return float(per_class[present].mean()), per_class, evaluated


def mean_iou(cm: ConfusionMatrix) -> tuple[float, np.ndarray, int]:
    """Per-class intersection over union averaged over classes with any evidence.

    Unions include the background row/column; background has no IoU of its
    own. Returns (mIoU, per-class vector with NaN where excluded, evaluated
    count).
    """
    C = cm.num_classes
    diag = np.diagonal(cm.counts)[:C].astype(np.float64)
    row = cm.counts.sum(axis=1)[:C]
    col = cm.counts.sum(axis=0)[:C]
    union = row + col - np.diagonal(cm.counts)[:C]
    per_class = np.full(C, np.nan)
    present = union > 0
    if not present.any():
        raise EmptyMatrix("no foreground pixels accumulated")
    per_class[present] = diag[present] / union[present]
    evaluated = int(present.sum())
    return float(per_class[present].mean()), per_class, evaluated
