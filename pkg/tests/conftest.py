import numpy as np
import pytest

from fgtk.mask import BACKGROUND
from fgtk.store import EmbeddingRecord, EmbeddingSet


def make_set(
    rng,
    num_classes=3,
    per_class=5,
    dim=8,
    separation=4.0,
    spread=1.0,
    prefix="r",
    unlabeled=0,
):
    """Gaussian class clusters along the first num_classes axes."""
    names = tuple(f"class{c:02d}" for c in range(num_classes))
    records = []
    for c in range(num_classes):
        for i in range(per_class):
            v = rng.normal(scale=spread, size=dim)
            v[c % dim] += separation
            records.append(EmbeddingRecord(f"{prefix}{c}_{i:03d}", c, v))
    for i in range(unlabeled):
        records.append(EmbeddingRecord(f"{prefix}u_{i:03d}", None, rng.normal(size=dim)))
    return EmbeddingSet(dim, names, records)


def square_mask(side, class_index, inset=1):
    """Background frame with a class-labeled square in the middle."""
    gt = np.full((side, side), BACKGROUND, dtype=np.uint16)
    gt[inset : side - inset, inset : side - inset] = class_index
    return gt


def matching_confidence(gt, fg_value=1.0):
    """Confidence 1 exactly on the mask's non-background pixels."""
    conf = np.zeros(gt.shape, dtype=np.float32)
    conf[gt != BACKGROUND] = fg_value
    return conf


@pytest.fixture
def rng():
    return np.random.default_rng(0x5EED)
