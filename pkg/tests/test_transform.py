import numpy as np
import pytest

from fgtk.errors import (
    DegenerateCovariance,
    DimMismatch,
    FileFormatError,
    TooFewSamples,
    ValidationError,
    ZeroVector,
)
from fgtk.store import EmbeddingRecord, EmbeddingSet
from fgtk.transform import (
    TransformKind,
    apply,
    fit_transform,
    load_model,
    project,
    save_model,
)

from conftest import make_set


def set_from_matrix(X, prefix="m"):
    n, d = X.shape
    recs = [EmbeddingRecord(f"{prefix}{i:04d}", 0, X[i]) for i in range(n)]
    return EmbeddingSet(d, ("one",), recs)


def oracle_eigvals(X):
    """Descending eigenvalues of the unbiased sample covariance."""
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    return np.linalg.eigvalsh(cov)[::-1]


def test_kind_parse_roundtrip():
    for kind in TransformKind:
        assert TransformKind.parse(kind.value) is kind
    with pytest.raises(ValidationError):
        TransformKind.parse("zca")


def test_norm_only_apply_is_unit_scaling(rng):
    train = make_set(rng, dim=6)
    model = fit_transform(train, TransformKind.NORM_ONLY)
    assert model.rank == 6
    assert model.basis is None
    v = rng.normal(size=6)
    out = apply(model, v)
    np.testing.assert_allclose(out, v / np.linalg.norm(v), rtol=0, atol=1e-12)


def test_whitened_training_covariance_is_identity(rng):
    X = rng.normal(size=(200, 12)) @ rng.normal(size=(12, 12))
    train = set_from_matrix(X.astype(np.float32))
    model = fit_transform(train, TransformKind.PCA_WHITEN)
    Z = project(model, train.matrix())
    Zc = Z - Z.mean(axis=0)
    cov = Zc.T @ Zc / (Z.shape[0] - 1)
    np.testing.assert_allclose(cov, np.eye(model.rank), atol=1e-8)


def test_eigenvalues_match_numpy_oracle(rng):
    X = rng.normal(size=(60, 9)) * np.linspace(0.2, 3.0, 9)
    train = set_from_matrix(X.astype(np.float32))
    model = fit_transform(train, TransformKind.PCA)
    expected = oracle_eigvals(train.matrix())[: model.rank]
    np.testing.assert_allclose(model.eigenvalues, expected, rtol=1e-9, atol=1e-12)
    assert (np.diff(model.eigenvalues) <= 1e-15).all()


def test_pca_projection_matches_eigh_oracle_up_to_sign(rng):
    X = rng.normal(size=(80, 7))
    train = set_from_matrix(X.astype(np.float32))
    model = fit_transform(train, TransformKind.PCA)
    Xd = train.matrix()
    Xc = Xd - Xd.mean(axis=0)
    vals, vecs = np.linalg.eigh(Xc.T @ Xc / (Xd.shape[0] - 1))
    oracle_basis = vecs[:, ::-1][:, : model.rank].T
    dots = np.abs(np.sum(model.basis * oracle_basis, axis=1))
    np.testing.assert_allclose(dots, 1.0, atol=1e-9)


def test_gram_path_agrees_with_covariance_math(rng):
    # fewer samples than dimensions exercises the n x n eigensolve
    X = rng.normal(size=(10, 40))
    train = set_from_matrix(X.astype(np.float32))
    model = fit_transform(train, TransformKind.PCA_WHITEN)
    assert model.rank <= 9
    Xd = train.matrix()
    expected = oracle_eigvals(Xd)[: model.rank]
    np.testing.assert_allclose(model.eigenvalues, expected, rtol=1e-8, atol=1e-10)
    Z = project(model, Xd)
    Zc = Z - Z.mean(axis=0)
    np.testing.assert_allclose(
        Zc.T @ Zc / (Xd.shape[0] - 1), np.eye(model.rank), atol=1e-8
    )


def test_rank_rule_drops_floor_components(rng):
    # last column is a copy of the first: one zero eigenvalue
    X = rng.normal(size=(50, 5))
    X = np.column_stack([X, X[:, 0]])
    train = set_from_matrix(X.astype(np.float64))
    model = fit_transform(train, TransformKind.PCA)
    assert model.rank == 5


def test_rank_cap(rng):
    train = set_from_matrix(rng.normal(size=(30, 8)))
    model = fit_transform(train, TransformKind.PCA_WHITEN, rank_cap=3)
    assert model.rank == 3
    assert project(model, train.matrix()).shape == (30, 3)
    with pytest.raises(ValidationError):
        fit_transform(train, TransformKind.PCA, rank_cap=0)


def test_rank_bounded_by_samples(rng):
    train = set_from_matrix(rng.normal(size=(4, 10)))
    model = fit_transform(train, TransformKind.PCA)
    assert model.rank <= 3


def test_too_few_samples(rng):
    train = set_from_matrix(rng.normal(size=(1, 5)))
    with pytest.raises(TooFewSamples):
        fit_transform(train, TransformKind.PCA)


def test_degenerate_covariance(rng):
    row = rng.normal(size=6)
    train = set_from_matrix(np.tile(row, (4, 1)))
    with pytest.raises(DegenerateCovariance):
        fit_transform(train, TransformKind.PCA_WHITEN)


def test_fit_is_deterministic(rng):
    X = rng.normal(size=(40, 6))
    train = set_from_matrix(X)
    a = fit_transform(train, TransformKind.PCA_WHITEN)
    b = fit_transform(train, TransformKind.PCA_WHITEN)
    assert a == b
    assert a.basis.tobytes() == b.basis.tobytes()


def test_apply_output_unit_norm(rng):
    train = make_set(rng, num_classes=2, per_class=10, dim=7)
    for kind in TransformKind:
        model = fit_transform(train, kind)
        for _ in range(5):
            out = apply(model, rng.normal(size=7))
            assert abs(np.linalg.norm(out) - 1.0) < 1e-12


def test_apply_zero_vector(rng):
    train = set_from_matrix(rng.normal(size=(20, 5)))
    model = fit_transform(train, TransformKind.PCA)
    with pytest.raises(ZeroVector):
        apply(model, model.mean)  # centers to exactly zero
    norm_model = fit_transform(train, TransformKind.NORM_ONLY)
    with pytest.raises(ZeroVector):
        apply(norm_model, np.zeros(5))


def test_project_rejects_wrong_dim(rng):
    train = set_from_matrix(rng.normal(size=(20, 5)))
    model = fit_transform(train, TransformKind.PCA)
    with pytest.raises(DimMismatch):
        project(model, np.ones(4))


def test_pre_normalize_matches_manual_normalization(rng):
    X = rng.normal(size=(30, 6)) * rng.uniform(0.1, 10.0, size=(30, 1))
    train = set_from_matrix(X)
    manual = set_from_matrix(X / np.linalg.norm(X, axis=1, keepdims=True))
    # `manual` stores its normalized rows as float32, so compare at that precision
    a = fit_transform(train, TransformKind.PCA_WHITEN, pre_normalize=True)
    b = fit_transform(manual, TransformKind.PCA_WHITEN)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-6)
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-4, atol=1e-9)
    q = rng.normal(size=6)
    np.testing.assert_allclose(apply(a, q), apply(b, q / np.linalg.norm(q)), atol=1e-4)


def test_scale_invariance_of_apply_with_pre_normalize(rng):
    train = set_from_matrix(rng.normal(size=(25, 6)))
    model = fit_transform(train, TransformKind.PCA_WHITEN, pre_normalize=True)
    v = rng.normal(size=6)
    np.testing.assert_allclose(apply(model, v), apply(model, 7.5 * v), atol=1e-12)


@pytest.mark.parametrize("kind", list(TransformKind))
@pytest.mark.parametrize("pre", [False, True])
def test_model_roundtrip_bytes(rng, tmp_path, kind, pre):
    train = set_from_matrix(rng.normal(size=(20, 6)))
    model = fit_transform(train, kind, pre_normalize=pre)
    p1 = tmp_path / f"{kind.value}-{pre}.fgptb"
    p2 = tmp_path / f"{kind.value}-{pre}-again.fgptb"
    save_model(model, p1)
    loaded = load_model(p1)
    assert loaded.kind is kind
    assert loaded.pre_normalize is pre
    assert loaded.rank == model.rank
    save_model(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_norm_only_file_has_no_basis_payload(rng, tmp_path):
    train = set_from_matrix(rng.normal(size=(10, 64)))
    path = tmp_path / "norm.fgptb"
    save_model(fit_transform(train, TransformKind.NORM_ONLY), path)
    # magic 6 + kind 1 + dims 8 + mean 64*4 + scale 64*4 + eigenvalues 64*4
    assert path.stat().st_size == 6 + 1 + 8 + 3 * 64 * 4


def test_load_model_rejects_trailing_garbage(rng, tmp_path):
    train = set_from_matrix(rng.normal(size=(10, 4)))
    path = tmp_path / "m.fgptb"
    save_model(fit_transform(train, TransformKind.PCA), path)
    bad = tmp_path / "trail.fgptb"
    bad.write_bytes(path.read_bytes() + b"xy")
    with pytest.raises(FileFormatError):
        load_model(bad)


def test_load_model_rejects_unknown_kind(rng, tmp_path):
    train = set_from_matrix(rng.normal(size=(10, 4)))
    path = tmp_path / "m.fgptb"
    save_model(fit_transform(train, TransformKind.PCA), path)
    data = bytearray(path.read_bytes())
    data[6] = 0x55
    bad = tmp_path / "kind.fgptb"
    bad.write_bytes(bytes(data))
    with pytest.raises(FileFormatError):
        load_model(bad)


def test_project_batch_matches_apply_loop(rng):
    train = make_set(rng, num_classes=2, per_class=8, dim=5)
    model = fit_transform(train, TransformKind.PCA_WHITEN)
    Q = rng.normal(size=(6, 5))
    Z = project(model, Q)
    for i in range(6):
        np.testing.assert_allclose(
            Z[i] / np.linalg.norm(Z[i]), apply(model, Q[i]), atol=1e-12
        )
