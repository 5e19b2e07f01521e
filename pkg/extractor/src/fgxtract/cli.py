"""Command-line entry point. One subcommand: extract."""

from __future__ import annotations

import argparse
import logging
import sys

from .annotations import AnnotationError
from .backbones import BackboneError, resolve_backbone
from .manifest import ManifestError, read_manifest
from .pipeline import run_extraction
from .segmenters import SegmenterError, resolve_segmenter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgxtract",
        description="Run a frozen backbone and a promptable segmenter over an "
        "image directory and emit FGEMB/FGCNF/FGMSK containers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("extract", help="extract embeddings, confidence maps, and masks")
    ex.add_argument("--images", required=True, help="image directory (annotations live beside the images)")
    ex.add_argument("--labels", required=True, help="CSV with header id,file,label")
    ex.add_argument("--backbone", default="toy-64", help="toy-<dim>, hf:<model>, or torchhub:<repo>:<model>")
    ex.add_argument("--segmenter", default="toy", help="toy or hf:<model>")
    ex.add_argument("--prompt", default="foreground", help="concept string handed to the segmenter")
    ex.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        manifest = read_manifest(args.labels, args.images)
        backbone = resolve_backbone(args.backbone)
        segmenter = resolve_segmenter(args.segmenter)
        meta = run_extraction(manifest, backbone, segmenter, args.prompt, args.out)
    except (ManifestError, AnnotationError, BackboneError, SegmenterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"{meta['image_count']} images -> {args.out} "
        f"(dim {meta['feature_dim']}, {len(meta['class_names'])} classes)"
    )
    if meta["skipped"]:
        print(f"skipped {len(meta['skipped'])} images; ids listed in metadata.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
