"""Ground-truth annotation rasters.

Convention: a grayscale PNG named ``<image stem>_mask.png`` next to each
image, with exactly three legal values: 0 background, 255 foreground
(the image's class region), 128 ignore. Anything else is a hard error,
since a silently misread value would corrupt every downstream metric.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .encode import BACKGROUND, IGNORE


class AnnotationError(ValueError):
    pass


def annotation_path(image_path: Path) -> Path:
    return image_path.with_name(image_path.stem + "_mask.png")


def load_annotation(path, image_id: str) -> np.ndarray:
    with Image.open(path) as img:
        grid = np.asarray(img.convert("L"))
    bad = sorted(int(v) for v in np.unique(grid) if v not in (0, 128, 255))
    if bad:
        raise AnnotationError(
            f"annotation for '{image_id}' ({path}) holds values {bad}; "
            "only 0 (background), 128 (ignore), 255 (foreground) are legal"
        )
    return grid


def to_mask(grid: np.ndarray, class_index: int | None, image_id: str) -> np.ndarray:
    """Turn a {0,128,255} annotation into a u16 label grid for one image."""
    out = np.full(grid.shape, BACKGROUND, dtype=np.uint16)
    out[grid == 128] = IGNORE
    fg = grid == 255
    if fg.any():
        if class_index is None:
            raise AnnotationError(
                f"'{image_id}' has foreground pixels but carries no label"
            )
        out[fg] = class_index
    return out
