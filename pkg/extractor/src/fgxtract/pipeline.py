"""End-to-end extraction: an image directory in, the three containers out.

Output layout under --out:

    embeddings.fgemb
    confidence/<prompt slug>/<id>.fgcnf
    masks/<id>.fgmsk
    metadata.json

Undecodable images and images without an annotation raster are skipped
with a logged id and excluded from every output, so the id sets of the
three containers always coincide. Confidence maps are bilinearly resampled
to the annotation resolution before writing; the evaluation side never
resamples anything.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .annotations import annotation_path, load_annotation, to_mask
from .encode import confidence_bytes, embeddings_bytes, mask_bytes
from .manifest import Manifest

log = logging.getLogger("fgxtract")


def prompt_slug(prompt: str) -> str:
    slug = "".join(ch if ch.isalnum() else "-" for ch in prompt.lower())
    while "--" in slug:
        slug = slug.replace("--", "-")
    return slug.strip("-") or "prompt"


def resample_to(conf: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    if conf.shape != (h, w):
        img = Image.fromarray(conf, mode="F")
        conf = np.asarray(img.resize((w, h), Image.Resampling.BILINEAR), dtype=np.float32)
    return np.clip(conf, 0.0, 1.0)


def run_extraction(manifest: Manifest, backbone, segmenter, prompt: str, out_dir) -> dict:
    out = Path(out_dir)
    slug = prompt_slug(prompt)
    conf_dir = out / "confidence" / slug
    mask_dir = out / "masks"
    conf_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    records = []
    conf_blobs: dict[str, bytes] = {}
    mask_blobs: dict[str, bytes] = {}
    skipped = []
    for row in manifest.rows:
        try:
            with Image.open(row.path) as img:
                img.load()
                feat = backbone.features(img)
                conf = segmenter.confidence(img, prompt)
        except OSError as exc:
            skipped.append({"id": row.id, "reason": f"undecodable image: {exc}"})
            log.warning("skipping %s: undecodable image (%s)", row.id, exc)
            continue
        ann = annotation_path(row.path)
        if not ann.exists():
            skipped.append({"id": row.id, "reason": "no annotation raster"})
            log.warning("skipping %s: no annotation raster at %s", row.id, ann)
            continue
        grid = load_annotation(ann, row.id)
        index = manifest.label_index(row)
        mask_blobs[row.id] = mask_bytes(to_mask(grid, index, row.id))
        conf_blobs[row.id] = confidence_bytes(resample_to(conf, grid.shape))
        records.append((row.id, index, feat))

    dim = backbone.dim
    if dim is None:
        if not records:
            raise ValueError("feature width unknown and no image was processed")
        dim = len(records[0][2])
    (out / "embeddings.fgemb").write_bytes(
        embeddings_bytes(dim, manifest.class_names, records)
    )
    for rec_id, blob in conf_blobs.items():
        (conf_dir / f"{rec_id}.fgcnf").write_bytes(blob)
    for rec_id, blob in mask_blobs.items():
        (mask_dir / f"{rec_id}.fgmsk").write_bytes(blob)

    meta = {
        "backbone": backbone.name,
        "feature_dim": dim,
        "segmenter": segmenter.name,
        "prompt": prompt,
        "prompt_slug": slug,
        "preprocessing": {
            "backbone": backbone.preprocessing(),
            "segmenter": segmenter.preprocessing(),
            "confidence_resample": "bilinear to annotation resolution, clipped to [0,1]",
        },
        "class_names": list(manifest.class_names),
        "image_count": len(records),
        "skipped": skipped,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta
