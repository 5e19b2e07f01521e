"""Feature-space maps for cosine comparison: L2 normalization only, PCA
projection, and PCA whitening.

A fitted model holds the training mean, an orthonormal row basis of
principal directions, per-component scale factors (1/sqrt(eigenvalue) when
whitening, ones otherwise), and the eigenvalue spectrum. Applying a model
always ends with L2 normalization, so every variant feeds cosine scoring.

Fitting centers the data and eigendecomposes the unbiased sample
covariance. When the sample count is below the input dimension the spectrum
is recovered from the n x n Gram matrix instead of the d x d covariance;
the retained eigenpairs are identical, the cost is far lower in the
low-data regime this toolkit targets.

FGPTB layout (little-endian), shared with the prototype container:

    magic "FGPTB" + 0x01
    u8 kind (0 = norm, 1 = pca, 2 = pca-whiten; bit 0x80 set when inputs
             are L2-normalized before centering)
    u32 dim_in, u32 rank
    f32 mean[dim_in]
    f32 basis[rank x dim_in] row-major (zero-length for kind=norm, whose
        basis is the identity and is never materialized)
    f32 scale[rank]
    f32 eigenvalues[rank]
    then an optional prototype section (see the prototype module)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCovariance,
    DimMismatch,
    FileFormatError,
    NonFiniteValue,
    TooFewSamples,
    ValidationError,
    ZeroVector,
)
from .fileio import Builder, Cursor, read_file, write_file
from .store import EmbeddingSet

MAGIC = b"FGPTB\x01"

#: Relative eigenvalue floor: components below max_eigenvalue * this are dropped.
EIGENVALUE_FLOOR_REL = 1e-10

#: Norm floor below which a vector cannot be L2-normalized.
NORM_EPS = 1e-12

_PRE_NORMALIZE_FLAG = 0x80


class TransformKind(enum.Enum):
    NORM_ONLY = "norm"
    PCA = "pca"
    PCA_WHITEN = "pca-whiten"

    @classmethod
    def parse(cls, text: str) -> "TransformKind":
        for kind in cls:
            if kind.value == text:
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValidationError(f"unknown transform kind '{text}' (valid: {valid})")


_KIND_CODES = {
    TransformKind.NORM_ONLY: 0,
    TransformKind.PCA: 1,
    TransformKind.PCA_WHITEN: 2,
}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True, eq=False)
class TransformModel:
    """Fitted feature-space map; immutable and safe to share across threads."""

    kind: TransformKind
    dim_in: int
    rank: int
    mean: np.ndarray
    basis: np.ndarray | None
    scale: np.ndarray
    eigenvalues: np.ndarray
    pre_normalize: bool = False

    def __post_init__(self) -> None:
        mean = _freeze(self.mean)
        scale = _freeze(self.scale)
        eigenvalues = _freeze(self.eigenvalues)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        if self.dim_in < 1:
            raise ValidationError("dim_in must be positive")
        if not 1 <= self.rank <= self.dim_in:
            raise ValidationError(f"rank {self.rank} outside [1, {self.dim_in}]")
        if mean.shape != (self.dim_in,):
            raise ValidationError("mean length must equal dim_in")
        if scale.shape != (self.rank,) or eigenvalues.shape != (self.rank,):
            raise ValidationError("scale/eigenvalues length must equal rank")
        if self.kind is TransformKind.NORM_ONLY:
            if self.basis is not None:
                raise ValidationError("norm-only models carry no explicit basis")
            if self.rank != self.dim_in:
                raise ValidationError("norm-only models must have rank == dim_in")
        else:
            basis = _freeze(self.basis)
            object.__setattr__(self, "basis", basis)
            if basis.shape != (self.rank, self.dim_in):
                raise ValidationError(
                    f"basis shape {basis.shape} != ({self.rank}, {self.dim_in})"
                )
            row_norms = np.linalg.norm(basis, axis=1)
            if np.abs(row_norms - 1.0).max() > 1e-6:
                raise ValidationError("basis rows must be unit-norm within 1e-6")
        for name, arr in (("mean", mean), ("scale", scale), ("eigenvalues", eigenvalues)):
            if not np.isfinite(arr).all():
                raise NonFiniteValue(f"model {name} contains non-finite values")
        if (scale <= 0).any():
            raise ValidationError("scale entries must be strictly positive")
        if (eigenvalues < 0).any():
            raise ValidationError("eigenvalues must be non-negative")
        if (np.diff(eigenvalues) > 0).any():
            raise ValidationError("eigenvalues must be non-increasing")
        if self.kind is TransformKind.PCA_WHITEN:
            expected = 1.0 / np.sqrt(eigenvalues)
            if np.abs(scale / expected - 1.0).max() > 1e-5:
                raise ValidationError("whitening scale must equal 1/sqrt(eigenvalue)")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransformModel):
            return NotImplemented
        basis_equal = (self.basis is None) == (other.basis is None) and (
            self.basis is None or np.array_equal(self.basis, other.basis)
        )
        return (
            self.kind is other.kind
            and self.dim_in == other.dim_in
            and self.rank == other.rank
            and self.pre_normalize == other.pre_normalize
            and np.array_equal(self.mean, other.mean)
            and basis_equal
            and np.array_equal(self.scale, other.scale)
            and np.array_equal(self.eigenvalues, other.eigenvalues)
        )


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def _normalize_rows(matrix: np.ndarray, what: str, ids=None) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    bad = np.where(norms < NORM_EPS)[0]
    if bad.size:
        label = ids[bad[0]] if ids is not None else f"row {bad[0]}"
        raise ZeroVector(f"{what}: norm below {NORM_EPS} for {label}")
    return matrix / norms[:, None]


def _canonical_signs(rows: np.ndarray) -> np.ndarray:
    # Eigenvector signs are arbitrary; make the largest-magnitude entry
    # positive so fits are reproducible across LAPACK builds.
    anchors = np.abs(rows).argmax(axis=1)
    flips = rows[np.arange(rows.shape[0]), anchors] < 0
    rows[flips] *= -1.0
    return rows


def fit_transform(
    train: EmbeddingSet,
    kind: TransformKind,
    rank_cap: int | None = None,
    pre_normalize: bool = False,
) -> TransformModel:
    """Fit a feature-space map on a training set.

    The retained rank is min(rank_cap, dim, n - 1, number of eigenvalues
    above the relative floor). Covariance uses the unbiased 1/(n-1)
    estimator; all arithmetic is float64 regardless of storage precision.
    """
    if rank_cap is not None and rank_cap < 1:
        raise ValidationError(f"rank_cap must be >= 1, got {rank_cap}")
    d = train.dim
    if kind is TransformKind.NORM_ONLY:
        return TransformModel(
            kind=kind,
            dim_in=d,
            rank=d,
            mean=np.zeros(d),
            basis=None,
            scale=np.ones(d),
            eigenvalues=np.ones(d),
            pre_normalize=pre_normalize,
        )

    n = len(train)
    if n < 2:
        raise TooFewSamples(f"{kind.value} needs at least 2 records, got {n}")
    X = train.matrix()
    if not np.isfinite(X).all():
        raise NonFiniteValue("training vectors contain non-finite values")
    if pre_normalize:
        X = _normalize_rows(X, "pre-normalization", ids=train.ids())

    mean = X.mean(axis=0)
    centered = X - mean

    if n >= d:
        cov = centered.T @ centered / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        rows = eigvecs[:, order].T
    else:
        gram = centered @ centered.T / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        rows = None  # reconstructed below, only for retained components
        gram_vecs = eigvecs[:, order]

    eigvals = np.clip(eigvals, 0.0, None)
    lam_max = eigvals[0] if eigvals.size else 0.0
    if lam_max <= 0.0:
        raise DegenerateCovariance("all covariance eigenvalues are zero")
    floor = lam_max * EIGENVALUE_FLOOR_REL
    usable = int(np.count_nonzero(eigvals > floor))
    rank = min(d, n - 1, usable)
    if rank_cap is not None:
        rank = min(rank, rank_cap)
    if rank < 1:
        raise DegenerateCovariance("no eigenvalue above the numerical floor")

    eigvals = eigvals[:rank]
    if rows is None:
        # Gram-path eigenvectors of the covariance: X_c^T u / sqrt((n-1) lambda).
        rows = (centered.T @ gram_vecs[:, :rank]).T
        rows /= np.sqrt((n - 1) * eigvals)[:, None]
    else:
        rows = rows[:rank].copy()
    rows = _canonical_signs(rows)
    rows /= np.linalg.norm(rows, axis=1)[:, None]

    if kind is TransformKind.PCA_WHITEN:
        scale = 1.0 / np.sqrt(eigvals)
    else:
        scale = np.ones(rank)

    return TransformModel(
        kind=kind,
        dim_in=d,
        rank=rank,
        mean=mean,
        basis=rows,
        scale=scale,
        eigenvalues=eigvals,
        pre_normalize=pre_normalize,
    )


def project(model: TransformModel, vectors) -> np.ndarray:
    """Transformed coordinates before the final L2 normalization.

    Accepts a single vector or an (m, dim_in) batch; always returns a
    2-D (m, rank) float64 array.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if V.shape[1] != model.dim_in:
        raise DimMismatch(f"vector length {V.shape[1]} != model dim_in {model.dim_in}")
    if not np.isfinite(V).all():
        raise NonFiniteValue("input vectors contain non-finite values")
    if model.pre_normalize:
        V = _normalize_rows(V, "pre-normalization")
    if model.kind is TransformKind.NORM_ONLY:
        # Copy so callers never alias the input buffer.
        return V.copy()
    Y = (V - model.mean) @ model.basis.T
    if model.kind is TransformKind.PCA_WHITEN:
        Y = Y * model.scale
    return Y


def apply(model: TransformModel, vector) -> np.ndarray:
    """Map one vector into the transformed space and L2-normalize it."""
    y = project(model, vector)
    if y.shape[0] != 1:
        raise DimMismatch("apply expects a single vector; use project for batches")
    norm = float(np.linalg.norm(y[0]))
    if norm < NORM_EPS:
        raise ZeroVector(f"transformed vector norm {norm} below {NORM_EPS}")
    return y[0] / norm


def save_model(model: TransformModel, path) -> None:
    """Write a model-only FGPTB file."""
    b = Builder()
    write_model_section(b, model)
    write_file(path, b.getvalue())


def load_model(path) -> TransformModel:
    """Read the model from an FGPTB file, tolerating a prototype section."""
    cur = Cursor(read_file(path), source=str(path))
    model = read_model_section(cur)
    if cur.remaining:
        read_bank_arrays(cur, model.rank)
    cur.done()
    return model


def write_model_section(b: Builder, model: TransformModel) -> None:
    b.raw(MAGIC)
    code = _KIND_CODES[model.kind]
    if model.pre_normalize:
        code |= _PRE_NORMALIZE_FLAG
    b.u8(code)
    b.u32(model.dim_in)
    b.u32(model.rank)
    b.f32_array(model.mean)
    if model.basis is not None:
        b.f32_array(model.basis)
    b.f32_array(model.scale)
    b.f32_array(model.eigenvalues)


def read_model_section(cur: Cursor) -> TransformModel:
    cur.expect_magic(MAGIC, "FGPTB")
    code = cur.u8()
    pre_normalize = bool(code & _PRE_NORMALIZE_FLAG)
    kind = _CODE_KINDS.get(code & ~_PRE_NORMALIZE_FLAG)
    if kind is None:
        raise FileFormatError(f"{cur.source}: unknown transform kind byte {code:#x}")
    dim_in = cur.u32()
    rank = cur.u32()
    if dim_in == 0 or rank == 0 or rank > dim_in:
        raise FileFormatError(f"{cur.source}: invalid dims (dim_in={dim_in}, rank={rank})")
    mean = cur.f32_array(dim_in)
    basis = None
    if kind is not TransformKind.NORM_ONLY:
        basis = cur.f32_array(rank * dim_in).reshape(rank, dim_in)
    scale = cur.f32_array(rank)
    eigenvalues = cur.f32_array(rank)
    return TransformModel(
        kind=kind,
        dim_in=dim_in,
        rank=rank,
        mean=mean,
        basis=basis,
        scale=scale,
        eigenvalues=eigenvalues,
        pre_normalize=pre_normalize,
    )


def read_bank_arrays(cur: Cursor, rank: int):
    """Raw prototype section: (class_names, support_counts, prototypes)."""
    num_classes = cur.u32()
    names = [cur.string() for _ in range(num_classes)]
    counts = cur.u32_array(num_classes).astype(np.int64)
    protos = cur.f32_array(num_classes * rank).reshape(num_classes, rank)
    return names, counts, protos
