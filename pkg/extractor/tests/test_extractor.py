"""Smoke and contract tests for the extraction front end.

The emitted containers are validated with the evaluation toolkit's own
loaders (fgtk), which is the whole point: the two packages must agree on
the bytes without sharing code.
"""

import csv
import json

import numpy as np
import pytest
from PIL import Image

from fgtk.mask import BACKGROUND, IGNORE, load_confidence, load_mask
from fgtk.store import load_embeddings

from fgxtract.cli import main

LABELS = ("russula", "boletus", "amanita", "lactarius")


def write_image(path, rng, size=(24, 18)):
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def write_annotation(path, size=(24, 18), fg=True, ignore_corner=False):
    grid = np.zeros((size[1], size[0]), dtype=np.uint8)
    if fg:
        grid[4:12, 6:16] = 255
    if ignore_corner:
        grid[0:2, 0:2] = 128
    Image.fromarray(grid, "L").save(path)


def smoke_set(root, rng, count=10):
    root.mkdir(exist_ok=True)
    rows = []
    for i in range(count):
        rec_id = f"img{i:03d}"
        write_image(root / f"{rec_id}.png", rng)
        write_annotation(root / f"{rec_id}_mask.png", ignore_corner=(i == 0))
        rows.append((rec_id, f"{rec_id}.png", LABELS[i % len(LABELS)]))
    write_labels(root / "labels.csv", rows)
    return rows


def write_labels(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "file", "label"])
        writer.writerows(rows)


def extract(images, out, **flags):
    args = ["extract", "--images", str(images), "--labels", str(images / "labels.csv"),
            "--out", str(out)]
    for key, value in flags.items():
        args += [f"--{key.replace('_', '-')}", value]
    return main(args)


def load_outputs(out, prompt_slug="foreground"):
    emb = load_embeddings(out / "embeddings.fgemb")
    names = emb.class_names
    confs = {
        p.stem: load_confidence(p) for p in sorted((out / "confidence" / prompt_slug).glob("*.fgcnf"))
    }
    masks = {
        p.stem: load_mask(p, num_classes=len(names)) for p in sorted((out / "masks").glob("*.fgmsk"))
    }
    return emb, confs, masks


def test_smoke_set_loads_in_evaluation_package(tmp_path):
    rng = np.random.default_rng(81)
    rows = smoke_set(tmp_path / "img", rng)
    out = tmp_path / "out"
    assert extract(tmp_path / "img", out) == 0

    emb, confs, masks = load_outputs(out)
    assert len(emb.records) == 10
    assert emb.dim == 64
    assert emb.class_names == tuple(sorted(set(LABELS)))
    ids = set(emb.ids())
    assert ids == set(confs) == set(masks) == {row[0] for row in rows}
    name_to_index = {n: i for i, n in enumerate(emb.class_names)}
    for rec_id, _, label in rows:
        conf, mask = confs[rec_id], masks[rec_id]
        assert conf.shape == mask.shape == (18, 24)
        assert float(conf.min()) >= 0.0 and float(conf.max()) <= 1.0
        fg = mask[4:12, 6:16]
        assert (fg == name_to_index[label]).all()
    assert (masks["img000"][0:2, 0:2] == IGNORE).all()
    assert masks["img001"][0, 0] == BACKGROUND

    meta = json.loads((out / "metadata.json").read_text())
    assert meta["feature_dim"] == 64
    assert meta["skipped"] == []
    assert "preprocessing" in meta


@pytest.mark.parametrize("width", [32, 64])
def test_embedding_dim_follows_configured_backbone(tmp_path, width):
    rng = np.random.default_rng(82)
    smoke_set(tmp_path / "img", rng, count=3)
    out = tmp_path / f"out{width}"
    assert extract(tmp_path / "img", out, backbone=f"toy-{width}") == 0
    assert load_embeddings(out / "embeddings.fgemb").dim == width


def test_same_file_under_two_ids_gives_identical_vectors(tmp_path):
    rng = np.random.default_rng(83)
    images = tmp_path / "img"
    images.mkdir()
    write_image(images / "one.png", rng)
    write_annotation(images / "one_mask.png")
    write_labels(images / "labels.csv", [
        ("first", "one.png", "russula"),
        ("second", "one.png", "boletus"),
    ])
    out = tmp_path / "out"
    assert extract(images, out) == 0
    emb = load_embeddings(out / "embeddings.fgemb")
    by_id = {rec.id: rec.vector for rec in emb.records}
    assert np.array_equal(by_id["first"], by_id["second"])


def test_undecodable_image_is_skipped_everywhere(tmp_path):
    rng = np.random.default_rng(84)
    images = tmp_path / "img"
    rows = smoke_set(images, rng, count=4)
    (images / rows[2][1]).write_bytes(b"this is not an image")
    out = tmp_path / "out"
    assert extract(images, out) == 0
    emb, confs, masks = load_outputs(out)
    expected = {row[0] for row in rows} - {rows[2][0]}
    assert set(emb.ids()) == set(confs) == set(masks) == expected
    meta = json.loads((out / "metadata.json").read_text())
    assert [item["id"] for item in meta["skipped"]] == [rows[2][0]]
    assert "undecodable" in meta["skipped"][0]["reason"]


def test_missing_annotation_is_skipped_everywhere(tmp_path):
    rng = np.random.default_rng(85)
    images = tmp_path / "img"
    rows = smoke_set(images, rng, count=4)
    (images / "img001_mask.png").unlink()
    out = tmp_path / "out"
    assert extract(images, out) == 0
    emb, confs, masks = load_outputs(out)
    expected = {row[0] for row in rows} - {"img001"}
    assert set(emb.ids()) == set(confs) == set(masks) == expected
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["skipped"][0] == {"id": "img001", "reason": "no annotation raster"}


def test_bad_annotation_value_is_a_hard_error(tmp_path, capsys):
    rng = np.random.default_rng(86)
    images = tmp_path / "img"
    smoke_set(images, rng, count=3)
    grid = np.zeros((18, 24), dtype=np.uint8)
    grid[5:9, 5:9] = 37
    Image.fromarray(grid, "L").save(images / "img001_mask.png")
    assert extract(images, tmp_path / "out") == 1
    err = capsys.readouterr().err
    assert "img001" in err and "37" in err


def test_foreground_without_label_is_a_hard_error(tmp_path, capsys):
    rng = np.random.default_rng(87)
    images = tmp_path / "img"
    images.mkdir()
    write_image(images / "a.png", rng)
    write_annotation(images / "a_mask.png")
    write_labels(images / "labels.csv", [("a", "a.png", "")])
    assert extract(images, tmp_path / "out") == 1
    assert "no label" in capsys.readouterr().err


def test_empty_annotation_gives_all_background_mask(tmp_path):
    rng = np.random.default_rng(88)
    images = tmp_path / "img"
    images.mkdir()
    write_image(images / "a.png", rng)
    write_annotation(images / "a_mask.png", fg=False)
    write_labels(images / "labels.csv", [("a", "a.png", "russula")])
    out = tmp_path / "out"
    assert extract(images, out) == 0
    _, _, masks = load_outputs(out)
    assert (masks["a"] == BACKGROUND).all()


def test_prompt_variants_get_distinct_directories(tmp_path):
    rng = np.random.default_rng(89)
    images = tmp_path / "img"
    smoke_set(images, rng, count=2)
    out = tmp_path / "out"
    assert extract(images, out, prompt="fungi caps") == 0
    assert extract(images, out, prompt="tree brackets!") == 0
    first = sorted(p.name for p in (out / "confidence" / "fungi-caps").glob("*.fgcnf"))
    second = sorted(p.name for p in (out / "confidence" / "tree-brackets").glob("*.fgcnf"))
    assert first == second == ["img000.fgcnf", "img001.fgcnf"]


def test_reruns_are_byte_identical(tmp_path):
    rng = np.random.default_rng(90)
    images = tmp_path / "img"
    smoke_set(images, rng, count=5)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert extract(images, out1) == 0
    assert extract(images, out2) == 0
    for rel in ["embeddings.fgemb", "masks/img003.fgmsk", "confidence/foreground/img003.fgcnf"]:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()


def test_confidence_resampled_to_annotation_resolution(tmp_path):
    rng = np.random.default_rng(91)
    images = tmp_path / "img"
    images.mkdir()
    write_image(images / "a.png", rng, size=(24, 18))
    write_annotation(images / "a_mask.png", size=(12, 9))
    write_labels(images / "labels.csv", [("a", "a.png", "russula")])
    out = tmp_path / "out"
    assert extract(images, out) == 0
    _, confs, masks = load_outputs(out)
    assert confs["a"].shape == masks["a"].shape == (9, 12)


def test_zero_images_still_writes_a_loadable_empty_set(tmp_path):
    images = tmp_path / "img"
    images.mkdir()
    write_labels(images / "labels.csv", [])
    out = tmp_path / "out"
    assert extract(images, out) == 0
    emb = load_embeddings(out / "embeddings.fgemb")
    assert len(emb.records) == 0
    assert emb.dim == 64


def test_duplicate_ids_rejected(tmp_path, capsys):
    rng = np.random.default_rng(92)
    images = tmp_path / "img"
    images.mkdir()
    write_image(images / "a.png", rng)
    write_annotation(images / "a_mask.png")
    write_labels(images / "labels.csv", [("x", "a.png", "r"), ("x", "a.png", "r")])
    assert extract(images, tmp_path / "out") == 1
    assert "duplicate id 'x'" in capsys.readouterr().err


def test_unknown_backbone_name(tmp_path, capsys):
    rng = np.random.default_rng(93)
    images = tmp_path / "img"
    smoke_set(images, rng, count=1)
    assert extract(images, tmp_path / "out", backbone="resnet50") == 1
    assert "unknown backbone" in capsys.readouterr().err


def test_missing_labels_csv_is_io_error(tmp_path, capsys):
    images = tmp_path / "img"
    images.mkdir()
    assert extract(images, tmp_path / "out") == 2
    assert "error:" in capsys.readouterr().err
