"""Nearest-prototype classification in a transformed feature space.

A bank pairs a fitted transform with one prototype per class: the mean of
the class's transformed unit vectors, re-normalized to unit length.
Re-normalization never changes a cosine argmax but makes self-similarity
exactly 1. A class with no training support, or whose member directions
cancel to a near-zero mean, gets an all-zero row, is flagged absent, and
never wins the argmax (its score is -inf).

Banks serialize into the FGPTB container right after the model section:

    u32 class_count
    class_count x (u16 length + UTF-8 name)
    u32 support_counts[class_count]
    f32 prototypes[class_count x rank] row-major
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    EmptyBank,
    MissingPrototypeSection,
    NoLabeledRecords,
    NonFiniteValue,
    ValidationError,
    ZeroVector,
)
from .fileio import Builder, Cursor, read_file, write_file
from .store import EmbeddingSet
from .transform import (
    NORM_EPS,
    TransformModel,
    project,
    read_bank_arrays,
    read_model_section,
    write_model_section,
)

#: Row norms below this mark a prototype as absent; valid rows are unit-norm.
_ABSENT_NORM = 0.5


@dataclass(frozen=True, eq=False)
class PrototypeBank:
    """Immutable transform + per-class unit prototypes (zero rows = absent)."""

    model: TransformModel
    class_names: tuple[str, ...]
    support_counts: np.ndarray
    prototypes: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.support_counts, dtype=np.int64, copy=True)
        counts.setflags(write=False)
        protos = np.array(self.prototypes, dtype=np.float64, copy=True)
        protos.setflags(write=False)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "support_counts", counts)
        object.__setattr__(self, "prototypes", protos)
        C = len(self.class_names)
        if C == 0:
            raise ValidationError("bank must cover at least one class")
        if len(set(self.class_names)) != C:
            raise ValidationError("class names must be unique")
        if counts.shape != (C,) or (counts < 0).any():
            raise ValidationError("support_counts must be non-negative, one per class")
        if protos.shape != (C, self.model.rank):
            raise ValidationError(
                f"prototype shape {protos.shape} != ({C}, {self.model.rank})"
            )
        if not np.isfinite(protos).all():
            raise NonFiniteValue("prototypes contain non-finite values")
        norms = np.linalg.norm(protos, axis=1)
        live = norms >= _ABSENT_NORM
        if live.any():
            if np.abs(norms[live] - 1.0).max() > 1e-6:
                raise ValidationError("live prototype rows must be unit-norm within 1e-6")
            if (counts[live] == 0).any():
                raise ValidationError("a live prototype requires positive support")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def absent_mask(self) -> np.ndarray:
        """Boolean per class: True when the prototype row is zero."""
        return np.linalg.norm(self.prototypes, axis=1) < _ABSENT_NORM

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrototypeBank):
            return NotImplemented
        return (
            self.model == other.model
            and self.class_names == other.class_names
            and np.array_equal(self.support_counts, other.support_counts)
            and np.array_equal(self.prototypes, other.prototypes)
        )


def build_bank(train: EmbeddingSet, model: TransformModel) -> PrototypeBank:
    """Average each class's transformed unit vectors and re-normalize.

    Unlabeled records are ignored. A class with no labeled records, or
    whose unit vectors sum to (near) zero, yields a zero prototype row.
    """
    if train.dim != model.dim_in:
        raise DimMismatch(f"training dim {train.dim} != model dim_in {model.dim_in}")
    labels = train.labels()
    labeled = labels >= 0
    if not labeled.any():
        raise NoLabeledRecords("training set has no labeled records")
    y = labels[labeled]
    labeled_ids = [r.id for r, keep in zip(train.records, labeled) if keep]
    Z = _unit_rows(project(model, train.matrix()[labeled]), labeled_ids)

    C = train.num_classes
    protos = np.zeros((C, model.rank))
    counts = np.zeros(C, dtype=np.int64)
    for c in range(C):
        members = Z[y == c]
        counts[c] = members.shape[0]
        if counts[c] == 0:
            continue
        mean = members.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < NORM_EPS:
            continue  # directions cancel; class stays absent
        protos[c] = mean / norm
    return PrototypeBank(
        model=model,
        class_names=train.class_names,
        support_counts=counts,
        prototypes=protos,
    )


def score_matrix(bank: PrototypeBank, vectors, ids=None) -> np.ndarray:
    """Cosines of each query against every prototype, (m, C).

    Absent classes score -inf in every row so they can never win an argmax.
    """
    absent = bank.absent_mask()
    if absent.all():
        raise EmptyBank("every prototype in the bank is absent")
    Z = _unit_rows(project(bank.model, vectors), ids)
    scores = Z @ bank.prototypes.T
    scores[:, absent] = -np.inf
    return scores


def classify(bank: PrototypeBank, vector) -> tuple[int, float, np.ndarray]:
    """Nearest live prototype by cosine; ties go to the lowest class index.

    Returns (class index, its cosine, the full per-class score vector).
    """
    scores = score_matrix(bank, np.atleast_2d(np.asarray(vector, dtype=np.float64)))[0]
    index = int(scores.argmax())
    return index, float(scores[index]), scores


def classify_batch(bank: PrototypeBank, queries: EmbeddingSet) -> list[tuple[str, int]]:
    """Classify every record of a set, in order; returns (id, class index) pairs."""
    if queries.dim != bank.model.dim_in:
        raise DimMismatch(
            f"query dim {queries.dim} != model dim_in {bank.model.dim_in}"
        )
    if len(queries) == 0:
        return []
    scores = score_matrix(bank, queries.matrix(), ids=queries.ids())
    indices = scores.argmax(axis=1)
    return [(rec_id, int(idx)) for rec_id, idx in zip(queries.ids(), indices)]


def _unit_rows(Z: np.ndarray, ids=None) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1)
    bad = np.where(norms < NORM_EPS)[0]
    if bad.size:
        label = ids[bad[0]] if ids is not None else f"query {bad[0]}"
        raise ZeroVector(f"{label} maps to a zero vector in transform space")
    return Z / norms[:, None]


def save_bank(bank: PrototypeBank, path) -> None:
    """Write model + prototype sections into one FGPTB file."""
    b = Builder()
    write_model_section(b, bank.model)
    b.u32(bank.num_classes)
    for name in bank.class_names:
        b.string(name)
    b.u32_array(bank.support_counts)
    b.f32_array(bank.prototypes)
    write_file(path, b.getvalue())


def load_bank(path) -> PrototypeBank:
    """Read a full bank; model-only files raise MissingPrototypeSection."""
    cur = Cursor(read_file(path), source=str(path))
    model = read_model_section(cur)
    if not cur.remaining:
        raise MissingPrototypeSection(f"{path}: file carries no prototype section")
    names, counts, protos = read_bank_arrays(cur, model.rank)
    cur.done()
    return PrototypeBank(
        model=model,
        class_names=tuple(names),
        support_counts=counts,
        prototypes=protos,
    )
