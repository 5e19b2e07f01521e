"""Extraction front end for the few-shot evaluation toolkit.

Runs a frozen image backbone and a promptable foreground segmenter over an
image directory, then writes the toolkit's FGEMB / FGCNF / FGMSK containers
plus a metadata sidecar. The two packages share nothing but those bytes.
"""

from .annotations import AnnotationError, annotation_path, load_annotation, to_mask
from .backbones import BackboneError, ToyBackbone, resolve_backbone
from .encode import (
    BACKGROUND,
    IGNORE,
    UNLABELED,
    confidence_bytes,
    embeddings_bytes,
    mask_bytes,
)
from .manifest import Manifest, ManifestError, ManifestRow, read_manifest
from .pipeline import prompt_slug, resample_to, run_extraction
from .segmenters import SegmenterError, ToySaliency, resolve_segmenter

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "BackboneError",
    "BACKGROUND",
    "IGNORE",
    "Manifest",
    "ManifestError",
    "ManifestRow",
    "SegmenterError",
    "ToyBackbone",
    "ToySaliency",
    "UNLABELED",
    "annotation_path",
    "confidence_bytes",
    "embeddings_bytes",
    "load_annotation",
    "mask_bytes",
    "prompt_slug",
    "read_manifest",
    "resample_to",
    "resolve_backbone",
    "resolve_segmenter",
    "run_extraction",
    "to_mask",
]
