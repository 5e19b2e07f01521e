"""Labeled embedding sets and their on-disk container.

FGEMB layout (all integers little-endian):

    magic "FGEMB" + 0x01
    u32 record_count, u32 dim, u32 class_count
    class_count x (u16 name_len, UTF-8 name)
    record_count x (u16 id_len, UTF-8 id,
                    u32 class_index with 0xFFFFFFFF = unlabeled,
                    dim x f32 vector)

Vectors are stored and compared as raw 32-bit floats; all downstream math
promotes to float64. Record order in the file is canonical and preserved:
deterministic sampling indexes into this order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadClassIndex,
    DimMismatch,
    FileFormatError,
    NonFiniteValue,
    UnknownId,
    ValidationError,
)
from .fileio import Builder, Cursor, read_file, write_file

MAGIC = b"FGEMB\x01"
UNLABELED_SENTINEL = 0xFFFFFFFF


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One id with its feature vector and optional class index."""

    id: str
    class_index: int | None
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.array(self.vector, dtype=np.float32, copy=True).reshape(-1)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.class_index is not None and self.class_index < 0:
            raise BadClassIndex(f"record '{self.id}': negative class index")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.class_index == other.class_index
            and self.vector.tobytes() == other.vector.tobytes()
        )


class EmbeddingSet:
    """Immutable collection of records sharing one dim and class table."""

    def __init__(
        self,
        dim: int,
        class_names: Sequence[str],
        records: Iterable[EmbeddingRecord],
    ) -> None:
        self.dim = int(dim)
        self.class_names = tuple(class_names)
        self.records = tuple(records)
        if self.dim < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        seen: set[str] = set()
        for name in self.class_names:
            if not name:
                raise ValidationError("class names must be non-empty")
            if name in seen:
                raise ValidationError(f"duplicate class name '{name}'")
            seen.add(name)
        for rec in self.records:
            if rec.vector.shape[0] != self.dim:
                raise DimMismatch(
                    f"record '{rec.id}' has length {rec.vector.shape[0]}, set dim is {self.dim}"
                )
            if rec.class_index is not None and rec.class_index >= self.num_classes:
                raise BadClassIndex(
                    f"record '{rec.id}': class index {rec.class_index} "
                    f">= class count {self.num_classes}"
                )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.class_names == other.class_names
            and self.records == other.records
        )

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    def matrix(self) -> np.ndarray:
        """All vectors stacked as a float64 (n, dim) matrix."""
        if not self.records:
            return np.empty((0, self.dim), dtype=np.float64)
        return np.stack([rec.vector for rec in self.records]).astype(np.float64)

    def labels(self) -> np.ndarray:
        """Class index per record, -1 where unlabeled."""
        return np.array(
            [-1 if rec.class_index is None else rec.class_index for rec in self.records],
            dtype=np.int64,
        )

    def class_counts(self) -> np.ndarray:
        """Number of labeled records per class."""
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for rec in self.records:
            if rec.class_index is not None:
                counts[rec.class_index] += 1
        return counts

    def check_finite(self) -> None:
        for rec in self.records:
            if not np.isfinite(rec.vector).all():
                raise NonFiniteValue(f"record '{rec.id}' contains non-finite values")


def load_embeddings(path) -> EmbeddingSet:
    """Read and fully validate an FGEMB file."""
    cur = Cursor(read_file(path), source=str(path))
    cur.expect_magic(MAGIC, "FGEMB")
    count = cur.u32()
    dim = cur.u32()
    num_classes = cur.u32()
    if dim == 0:
        raise FileFormatError(f"{path}: dim must be positive")
    names = [cur.string() for _ in range(num_classes)]
    records = []
    for _ in range(count):
        rec_id = cur.string()
        raw_index = cur.u32()
        vec = cur.f32_array(dim)
        if raw_index != UNLABELED_SENTINEL and raw_index >= num_classes:
            raise BadClassIndex(
                f"{path}: record '{rec_id}': class index {raw_index} "
                f">= class count {num_classes}"
            )
        if not np.isfinite(vec).all():
            raise NonFiniteValue(f"{path}: record '{rec_id}' contains non-finite values")
        index = None if raw_index == UNLABELED_SENTINEL else raw_index
        records.append(EmbeddingRecord(rec_id, index, vec))
    cur.done()
    return EmbeddingSet(dim, names, records)


def save_embeddings(embeddings: EmbeddingSet, path) -> None:
    """Write an FGEMB file; load_embeddings reproduces the set bit-exactly."""
    embeddings.check_finite()
    b = Builder()
    b.raw(MAGIC)
    b.u32(len(embeddings.records))
    b.u32(embeddings.dim)
    b.u32(embeddings.num_classes)
    for name in embeddings.class_names:
        b.string(name)
    for rec in embeddings.records:
        b.string(rec.id)
        b.u32(UNLABELED_SENTINEL if rec.class_index is None else rec.class_index)
        b.f32_array(rec.vector)
    write_file(path, b.getvalue())


def subset_by_ids(embeddings: EmbeddingSet, ids: Sequence[str]) -> EmbeddingSet:
    """Records in the order of `ids`; dim and class table preserved."""
    index: dict[str, int] = {}
    for i, rec in enumerate(embeddings.records):
        index.setdefault(rec.id, i)
    missing = [rec_id for rec_id in ids if rec_id not in index]
    if missing:
        raise UnknownId(f"ids not present in set: {', '.join(missing)}")
    picked = [embeddings.records[index[rec_id]] for rec_id in ids]
    return EmbeddingSet(embeddings.dim, embeddings.class_names, picked)
