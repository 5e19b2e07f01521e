"""Writers for the evaluation toolkit's container formats.

Deliberately self-contained: this package talks to the evaluation side
only through the bytes it emits, so the little-endian layouts are spelled
out here instead of imported.

    FGEMB: magic "FGEMB"+0x01, u32 record count, u32 dim, u32 class count,
           class names (u16 byte-length + UTF-8 each), then per record:
           id string, u32 class index (0xFFFFFFFF = unlabeled), dim float32
    FGCNF: magic "FGCNF"+0x01, u32 width, u32 height, float32 row-major
    FGMSK: magic "FGMSK"+0x01, u32 width, u32 height, u16 row-major
           (0xFFFF background, 0xFFFE ignore)
"""

from __future__ import annotations

import struct

import numpy as np

UNLABELED = 0xFFFFFFFF
BACKGROUND = 0xFFFF
IGNORE = 0xFFFE


def _string(text: str) -> bytes:
    data = text.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ValueError(f"string of {len(data)} bytes exceeds the u16 length prefix")
    return struct.pack("<H", len(data)) + data


def embeddings_bytes(dim, class_names, records) -> bytes:
    """Serialize (id, class index or None, vector) triples into an FGEMB blob."""
    if dim < 1:
        raise ValueError("feature width must be positive")
    parts = [b"FGEMB\x01", struct.pack("<III", len(records), dim, len(class_names))]
    for name in class_names:
        parts.append(_string(name))
    for rec_id, index, vector in records:
        vec = np.ascontiguousarray(vector, dtype="<f4")
        if vec.shape != (dim,):
            raise ValueError(f"record '{rec_id}': expected {dim} values, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValueError(f"record '{rec_id}': non-finite feature values")
        if index is not None and not 0 <= index < len(class_names):
            raise ValueError(f"record '{rec_id}': class index {index} out of range")
        parts.append(_string(rec_id))
        parts.append(struct.pack("<I", UNLABELED if index is None else index))
        parts.append(vec.tobytes())
    return b"".join(parts)


def confidence_bytes(grid) -> bytes:
    grid = np.ascontiguousarray(grid, dtype="<f4")
    if grid.ndim != 2 or 0 in grid.shape:
        raise ValueError(f"confidence grid must be 2-D and non-empty, got {grid.shape}")
    if not np.isfinite(grid).all():
        raise ValueError("confidence values must be finite")
    h, w = grid.shape
    return b"FGCNF\x01" + struct.pack("<II", w, h) + grid.tobytes()


def mask_bytes(grid) -> bytes:
    grid = np.ascontiguousarray(grid, dtype="<u2")
    if grid.ndim != 2 or 0 in grid.shape:
        raise ValueError(f"mask grid must be 2-D and non-empty, got {grid.shape}")
    h, w = grid.shape
    return b"FGMSK\x01" + struct.pack("<II", w, h) + grid.tobytes()
