"""Extraction manifest: which images, under which ids, carrying which labels.

The labels file is a CSV with header ``id,file,label``. Ids become output
file names, so they are restricted to letters, digits, dot, dash, and
underscore. An empty label marks the image as unlabeled; the class table
is the sorted set of the non-empty labels.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

_ID_RE = re.compile(r"[A-Za-z0-9._-]+")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: Path
    label: str | None


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]
    class_names: tuple[str, ...]

    def label_index(self, row: ManifestRow) -> int | None:
        if row.label is None:
            return None
        return self.class_names.index(row.label)


def read_manifest(labels_csv, image_root) -> Manifest:
    image_root = Path(image_root)
    with open(labels_csv, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "file", "label"]:
            raise ManifestError(
                f"{labels_csv}: expected header id,file,label, got {header}"
            )
        rows = []
        seen: set[str] = set()
        for lineno, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 3:
                raise ManifestError(f"{labels_csv}:{lineno}: expected 3 fields, got {len(parts)}")
            rec_id, file_name, label = (p.strip() for p in parts)
            if not _ID_RE.fullmatch(rec_id):
                raise ManifestError(f"{labels_csv}:{lineno}: bad id {rec_id!r}")
            if rec_id in seen:
                raise ManifestError(f"{labels_csv}:{lineno}: duplicate id '{rec_id}'")
            if not file_name:
                raise ManifestError(f"{labels_csv}:{lineno}: empty file field")
            seen.add(rec_id)
            rows.append(ManifestRow(rec_id, image_root / file_name, label or None))
    names = tuple(sorted({row.label for row in rows if row.label is not None}))
    return Manifest(tuple(rows), names)
