"""Confidence-map thresholding, label propagation, and raster file I/O.

Rasters are plain numpy arrays shaped (height, width): confidence maps are
float32 grids, label masks are uint16 grids. Two label values are reserved:
0xFFFF marks background and 0xFFFE marks ignored (unannotated) pixels;
everything else is a class index.

Thresholding produces a mask whose foreground pixels carry a provisional
label 0; propagation rewrites them with the image-level predicted class.

On-disk formats (little-endian):

    FGCNF: magic "FGCNF" + 0x01, u32 width, u32 height, f32 values row-major
    FGMSK: magic "FGMSK" + 0x01, u32 width, u32 height, u16 labels row-major
"""

from __future__ import annotations

import numpy as np

from .errors import (
    BadClassIndex,
    BadSentinel,
    BadTau,
    FileFormatError,
    NonFiniteValue,
    ValidationError,
)
from .fileio import Builder, Cursor, read_file, write_file

CONFIDENCE_MAGIC = b"FGCNF\x01"
MASK_MAGIC = b"FGMSK\x01"

BACKGROUND = 0xFFFF
IGNORE = 0xFFFE


def threshold(conf: np.ndarray, tau: float) -> np.ndarray:
    """Binarize a confidence map: label 0 where value >= tau, else background.

    tau=0 keeps every pixel; an all-background result is legal.
    """
    conf = _check_confidence(conf)
    tau = float(tau)
    if not 0.0 <= tau <= 1.0:
        raise BadTau(f"tau must be in [0, 1], got {tau}")
    out = np.full(conf.shape, BACKGROUND, dtype=np.uint16)
    out[conf >= tau] = 0
    return out


def propagate_label(mask: np.ndarray, class_index: int) -> np.ndarray:
    """Rewrite every foreground pixel with class_index; sentinels stay put."""
    mask = _check_mask(mask)
    class_index = int(class_index)
    if not 0 <= class_index < IGNORE:
        raise BadClassIndex(f"class index {class_index} collides with sentinel space")
    out = mask.copy()
    out[(mask != BACKGROUND) & (mask != IGNORE)] = class_index
    return out


def save_confidence(conf: np.ndarray, path) -> None:
    conf = _check_confidence(conf)
    h, w = conf.shape
    b = Builder()
    b.raw(CONFIDENCE_MAGIC)
    b.u32(w)
    b.u32(h)
    b.f32_array(conf)
    write_file(path, b.getvalue())


def load_confidence(path) -> np.ndarray:
    cur = Cursor(read_file(path), source=str(path))
    cur.expect_magic(CONFIDENCE_MAGIC, "FGCNF")
    w = cur.u32()
    h = cur.u32()
    if w == 0 or h == 0:
        raise FileFormatError(f"{path}: zero-size raster ({w}x{h})")
    values = cur.f32_array(w * h).astype(np.float32).reshape(h, w)
    cur.done()
    if not np.isfinite(values).all():
        raise NonFiniteValue(f"{path}: confidence values must be finite")
    return values


def save_mask(mask: np.ndarray, path) -> None:
    mask = _check_mask(mask)
    h, w = mask.shape
    b = Builder()
    b.raw(MASK_MAGIC)
    b.u32(w)
    b.u32(h)
    b.u16_array(mask)
    write_file(path, b.getvalue())


def load_mask(path, num_classes: int | None = None) -> np.ndarray:
    """Read an FGMSK raster; with num_classes given, stray labels are rejected."""
    cur = Cursor(read_file(path), source=str(path))
    cur.expect_magic(MASK_MAGIC, "FGMSK")
    w = cur.u32()
    h = cur.u32()
    if w == 0 or h == 0:
        raise FileFormatError(f"{path}: zero-size raster ({w}x{h})")
    labels = cur.u16_array(w * h).reshape(h, w)
    cur.done()
    if num_classes is not None:
        stray = (labels >= num_classes) & (labels != BACKGROUND) & (labels != IGNORE)
        if stray.any():
            value = int(labels[stray][0])
            raise BadSentinel(
                f"{path}: label {value} is neither a sentinel nor < {num_classes}"
            )
    return labels


def _check_confidence(conf) -> np.ndarray:
    conf = np.asarray(conf, dtype=np.float32)
    if conf.ndim != 2 or conf.shape[0] == 0 or conf.shape[1] == 0:
        raise ValidationError(f"confidence map must be 2-D and non-empty, got {conf.shape}")
    if not np.isfinite(conf).all():
        raise NonFiniteValue("confidence values must be finite")
    return conf


def _check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype != np.uint16:
        raise ValidationError(f"mask dtype must be uint16, got {mask.dtype}")
    if mask.ndim != 2 or mask.shape[0] == 0 or mask.shape[1] == 0:
        raise ValidationError(f"mask must be 2-D and non-empty, got {mask.shape}")
    return mask
