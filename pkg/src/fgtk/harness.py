"""Deterministic k-shot sweeps: subset sampling, per-seed runs, aggregation.

Subsets are drawn per class with a splitmix64 stream so any implementation
of the same procedure reproduces them bit-for-bit: the stream for class c
starts at splitmix64_mix(seed XOR (GOLDEN * (c+1))), a backward
Fisher-Yates shuffle permutes the class's records in file order, the first
min(k, n_c) shuffled entries are kept, and the selection is emitted in
file order.

A sweep runs every (kind, k, seed) cell: fit transform on the sampled
subset (or the full pool when configured), build the prototype bank,
classify the test embeddings into an image-level confusion matrix, and
score pixels by thresholding each confidence map and propagating the
predicted class. Cells may execute on a thread pool; results are assembled
in (kind, k, seed) order, so reports are byte-identical regardless of
thread count. Wall-clock times live only in memory and never reach the
serialized report.

Pixel scoring inside the sweep uses per-image label histograms computed
once from the rasters (the predicted mask is constant on the thresholded
foreground, so only the ground-truth label counts inside and outside it
matter). run_once keeps the direct raster path; a test pins the two
routes to identical confusion counts.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import Mapping

import numpy as np

from .errors import (
    BadSentinel,
    BadTau,
    DimensionMismatch,
    IoFailure,
    MissingArtifact,
    ToolkitError,
    ValidationError,
)
from .fileio import write_file
from .mask import BACKGROUND, IGNORE, propagate_label, threshold
from .metrics import (
    ConfusionMatrix,
    accumulate_image,
    accumulate_pixels,
    mean_accuracy,
    mean_iou,
)
from .prototype import build_bank, classify_batch
from .store import EmbeddingSet
from .transform import TransformKind, fit_transform

GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def splitmix64_mix(z: int) -> int:
    """The splitmix64 finalizer; all arithmetic modulo 2**64."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


class SplitMix64:
    """64-bit stream: state steps by GOLDEN, outputs are mixed states."""

    __slots__ = ("_state",)

    def __init__(self, state: int) -> None:
        self._state = state & _MASK64

    def next(self) -> int:
        self._state = (self._state + GOLDEN) & _MASK64
        return splitmix64_mix(self._state)


def class_stream(seed: int, class_index: int) -> SplitMix64:
    """Independent stream for one (seed, class) pair."""
    return SplitMix64(splitmix64_mix((seed ^ (GOLDEN * (class_index + 1))) & _MASK64))


def sample_subset(train: EmbeddingSet, k: int, seed: int) -> EmbeddingSet:
    """At most k records per class, drawn uniformly without replacement.

    Classes smaller than k contribute everything they have; unlabeled
    records never appear. The result lists records in the original file
    order. Same (train, k, seed) always yields the same subset.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    labels = train.labels()
    keep: list[int] = []
    for c in range(train.num_classes):
        positions = np.where(labels == c)[0]
        n = int(positions.size)
        if n == 0:
            continue
        order = list(range(n))
        stream = class_stream(seed, c)
        for i in range(n - 1, 0, -1):
            j = stream.next() % (i + 1)
            order[i], order[j] = order[j], order[i]
        chosen = sorted(order[: min(k, n)])
        keep.extend(int(positions[i]) for i in chosen)
    keep.sort()
    return EmbeddingSet(
        dim=train.dim,
        class_names=train.class_names,
        records=tuple(train.records[i] for i in keep),
    )


_DEFAULT_KINDS = (TransformKind.NORM_ONLY, TransformKind.PCA, TransformKind.PCA_WHITEN)


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition for one sweep; validated on construction."""

    k_values: tuple[int, ...] = (1, 5, 10, 20, 50, 100, 200)
    num_seeds: int = 20
    seeds: tuple[int, ...] | None = None
    kinds: tuple[TransformKind, ...] = _DEFAULT_KINDS
    tau: float = 0.5
    rank_cap: int | None = None
    pre_normalize: bool = False
    fit_full_pool: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.k_values:
            raise ValidationError("k_values must not be empty")
        if any(k < 1 for k in self.k_values):
            raise ValidationError("k_values must be positive")
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise ValidationError("k_values must be strictly increasing")
        if self.num_seeds < 1:
            raise ValidationError("num_seeds must be >= 1")
        if self.seeds is not None:
            if not self.seeds:
                raise ValidationError("explicit seed list must not be empty")
            if len(set(self.seeds)) != len(self.seeds):
                raise ValidationError("explicit seed list must not repeat")
            if any(s < 0 or s > _MASK64 for s in self.seeds):
                raise ValidationError("seeds must fit in 64 bits")
        if not self.kinds:
            raise ValidationError("at least one transform kind is required")
        if len(set(self.kinds)) != len(self.kinds):
            raise ValidationError("transform kinds must not repeat")
        if not 0.0 <= self.tau <= 1.0:
            raise BadTau(f"tau must be in [0, 1], got {self.tau}")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise ValidationError(f"rank_cap must be >= 1, got {self.rank_cap}")

    def effective_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return self.seeds
        return tuple(range(self.num_seeds))


@dataclass(frozen=True)
class RunResult:
    """One (kind, k, seed) cell. wall_time stays out of serialized reports."""

    kind: str
    k: int
    seed: int
    macc: float
    miou: float
    evaluated_classes_acc: int
    evaluated_classes_iou: int
    absent_class_count: int
    wall_time: float

    def __post_init__(self) -> None:
        for name, value in (("mAcc", self.macc), ("mIoU", self.miou)):
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} {value} outside [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "seed": self.seed,
            "mAcc": self.macc,
            "mIoU": self.miou,
            "evaluated_classes_acc": self.evaluated_classes_acc,
            "evaluated_classes_iou": self.evaluated_classes_iou,
            "absent_classes": self.absent_class_count,
        }


@dataclass(frozen=True)
class CellStats:
    """Across-seed aggregate of one (kind, k) cell; std uses ddof=1."""

    kind: str
    k: int
    macc_mean: float
    macc_std: float
    miou_mean: float
    miou_std: float
    absent_classes_mean: float


@dataclass(frozen=True)
class SweepReport:
    config: SweepConfig
    runs: tuple[RunResult, ...]
    cells: tuple[CellStats, ...]
    histogram: tuple[int, ...]


def check_artifacts(
    test: EmbeddingSet,
    gt_masks: Mapping[str, np.ndarray],
    confidence_maps: Mapping[str, np.ndarray],
) -> None:
    """Every test id needs a mask and a map; all gaps reported at once."""
    missing = []
    for rec_id in test.ids():
        lacking = [
            which
            for which, table in (("mask", gt_masks), ("confidence", confidence_maps))
            if rec_id not in table
        ]
        if lacking:
            missing.append(f"{rec_id} ({', '.join(lacking)})")
    if missing:
        raise MissingArtifact(f"{len(missing)} test ids lack artifacts: " + "; ".join(missing))


def _require_labeled(test: EmbeddingSet) -> np.ndarray:
    labels = test.labels()
    if (labels < 0).any():
        bad = test.records[int(np.where(labels < 0)[0][0])].id
        raise ValidationError(f"test record '{bad}' has no class label")
    if labels.size == 0:
        raise ValidationError("test set is empty")
    return labels


def run_once(
    train: EmbeddingSet,
    test: EmbeddingSet,
    gt_masks: Mapping[str, np.ndarray],
    confidence_maps: Mapping[str, np.ndarray],
    kind: TransformKind,
    k: int,
    seed: int,
    config: SweepConfig,
) -> RunResult:
    """One cell via the direct raster path (threshold, propagate, count)."""
    started = perf_counter()
    gt_labels = _require_labeled(test)
    check_artifacts(test, gt_masks, confidence_maps)
    subset = sample_subset(train, k, seed)
    model = fit_transform(
        train if config.fit_full_pool else subset,
        kind,
        rank_cap=config.rank_cap,
        pre_normalize=config.pre_normalize,
    )
    bank = build_bank(subset, model)
    predictions = classify_batch(bank, test)

    C = train.num_classes
    image_cm = ConfusionMatrix(C)
    pixel_cm = ConfusionMatrix(C)
    for (rec_id, pred), gt in zip(predictions, gt_labels):
        accumulate_image(image_cm, int(gt), pred)
        pred_mask = propagate_label(threshold(confidence_maps[rec_id], config.tau), pred)
        accumulate_pixels(pixel_cm, gt_masks[rec_id], pred_mask)

    macc, _, eval_acc = mean_accuracy(image_cm)
    miou, _, eval_iou = mean_iou(pixel_cm)
    return RunResult(
        kind=kind.value,
        k=k,
        seed=seed,
        macc=macc,
        miou=miou,
        evaluated_classes_acc=eval_acc,
        evaluated_classes_iou=eval_iou,
        absent_class_count=int(bank.absent_mask().sum()),
        wall_time=perf_counter() - started,
    )


class EvalData:
    """Raster evidence folded to per-image label histograms.

    For each test image, in_fg[i] counts ground-truth labels (background
    mapped to index C) over pixels the thresholded confidence map calls
    foreground, out_fg[i] over the rest; ignore pixels are dropped. A
    cell's pixel confusion is then a sum over images of those two columns,
    placed at the predicted class and at background respectively.
    """

    __slots__ = ("test", "gt_labels", "in_fg", "out_fg")

    def __init__(
        self,
        test: EmbeddingSet,
        gt_masks: Mapping[str, np.ndarray],
        confidence_maps: Mapping[str, np.ndarray],
        tau: float,
    ) -> None:
        self.test = test
        self.gt_labels = _require_labeled(test)
        check_artifacts(test, gt_masks, confidence_maps)
        C = test.num_classes
        side = C + 1
        n = len(test)
        self.in_fg = np.zeros((n, side), dtype=np.int64)
        self.out_fg = np.zeros((n, side), dtype=np.int64)
        for i, rec_id in enumerate(test.ids()):
            gt = np.asarray(gt_masks[rec_id])
            fg = threshold(confidence_maps[rec_id], tau) != BACKGROUND
            if gt.shape != fg.shape:
                raise DimensionMismatch(
                    f"'{rec_id}': gt shape {gt.shape} != confidence shape {fg.shape}"
                )
            keep = gt != IGNORE
            g = gt[keep].astype(np.int64)
            stray = (g != BACKGROUND) & (g >= C)
            if stray.any():
                raise BadSentinel(
                    f"'{rec_id}': gt label {int(g[stray][0])} is neither a sentinel nor < {C}"
                )
            g[g == BACKGROUND] = C
            fg_kept = fg[keep]
            self.in_fg[i] = np.bincount(g[fg_kept], minlength=side)
            self.out_fg[i] = np.bincount(g[~fg_kept], minlength=side)

    def score(self, predictions: np.ndarray) -> tuple[ConfusionMatrix, ConfusionMatrix]:
        """Confusion matrices for one per-image prediction vector."""
        C = self.test.num_classes
        side = C + 1
        image_cm = ConfusionMatrix(C)
        flat = np.bincount(self.gt_labels * side + predictions, minlength=side * side)
        image_cm.counts += flat.reshape(side, side)
        pixel_cm = ConfusionMatrix(C)
        for p in np.unique(predictions):
            pixel_cm.counts[:, p] += self.in_fg[predictions == p].sum(axis=0)
        pixel_cm.counts[:, C] += self.out_fg.sum(axis=0)
        return image_cm, pixel_cm


def _run_cell(
    train: EmbeddingSet,
    data: EvalData,
    kind: TransformKind,
    k: int,
    seed: int,
    config: SweepConfig,
) -> RunResult:
    started = perf_counter()
    subset = sample_subset(train, k, seed)
    model = fit_transform(
        train if config.fit_full_pool else subset,
        kind,
        rank_cap=config.rank_cap,
        pre_normalize=config.pre_normalize,
    )
    bank = build_bank(subset, model)
    pairs = classify_batch(bank, data.test)
    predictions = np.array([idx for _, idx in pairs], dtype=np.int64)
    image_cm, pixel_cm = data.score(predictions)
    macc, _, eval_acc = mean_accuracy(image_cm)
    miou, _, eval_iou = mean_iou(pixel_cm)
    return RunResult(
        kind=kind.value,
        k=k,
        seed=seed,
        macc=macc,
        miou=miou,
        evaluated_classes_acc=eval_acc,
        evaluated_classes_iou=eval_iou,
        absent_class_count=int(bank.absent_mask().sum()),
        wall_time=perf_counter() - started,
    )


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = 0.0 if arr.size < 2 else float(arr.std(ddof=1))
    return mean, std


def support_histogram(train: EmbeddingSet) -> tuple[int, ...]:
    """Entry x-1 counts classes with at least x labeled records."""
    counts = train.class_counts()
    top = int(counts.max()) if counts.size else 0
    return tuple(int((counts >= x).sum()) for x in range(1, top + 1))


def run_sweep(
    config: SweepConfig,
    train: EmbeddingSet,
    test: EmbeddingSet,
    gt_masks: Mapping[str, np.ndarray],
    confidence_maps: Mapping[str, np.ndarray],
    threads: int | None = None,
) -> SweepReport:
    """Every (kind, k, seed) cell, deterministically ordered and aggregated.

    `threads` caps cell parallelism; the report is identical for any value.
    A failing cell aborts the sweep, its error annotated with the cell key.
    """
    if train.class_names != test.class_names:
        raise ValidationError("train and test must share one class table")
    data = EvalData(test, gt_masks, confidence_maps, config.tau)
    grid = [
        (kind, k, seed)
        for kind in config.kinds
        for k in config.k_values
        for seed in config.effective_seeds()
    ]
    if threads is not None and threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")
    if threads == 1 or len(grid) == 1:
        outcomes = [_guarded_cell(train, data, kind, k, seed, config) for kind, k, seed in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_guarded_cell, train, data, kind, k, seed, config)
                for kind, k, seed in grid
            ]
            outcomes = [f.result() for f in futures]

    runs = tuple(outcomes)
    cells = []
    by_cell: dict[tuple[str, int], list[RunResult]] = {}
    for run in runs:
        by_cell.setdefault((run.kind, run.k), []).append(run)
    for kind in config.kinds:
        for k in config.k_values:
            members = by_cell[(kind.value, k)]
            macc_mean, macc_std = _mean_std([r.macc for r in members])
            miou_mean, miou_std = _mean_std([r.miou for r in members])
            absent_mean, _ = _mean_std([float(r.absent_class_count) for r in members])
            cells.append(
                CellStats(
                    kind=kind.value,
                    k=k,
                    macc_mean=macc_mean,
                    macc_std=macc_std,
                    miou_mean=miou_mean,
                    miou_std=miou_std,
                    absent_classes_mean=absent_mean,
                )
            )
    return SweepReport(
        config=config,
        runs=runs,
        cells=tuple(cells),
        histogram=support_histogram(train),
    )


def _guarded_cell(train, data, kind, k, seed, config) -> RunResult:
    try:
        return _run_cell(train, data, kind, k, seed, config)
    except ToolkitError as exc:
        exc.args = (f"sweep cell (kind={kind.value}, k={k}, seed={seed}): {exc}",)
        raise


def report_json(report: SweepReport) -> str:
    config = report.config
    payload = {
        "config": {
            "k_values": list(config.k_values),
            "num_seeds": config.num_seeds,
            "seeds": list(config.effective_seeds()),
            "kinds": [kind.value for kind in config.kinds],
            "tau": config.tau,
            "rank_cap": config.rank_cap,
            "pre_normalize": config.pre_normalize,
            "fit_full_pool": config.fit_full_pool,
        },
        "cells": [
            {
                "kind": cell.kind,
                "k": cell.k,
                "mAcc_mean": cell.macc_mean,
                "mAcc_std": cell.macc_std,
                "mIoU_mean": cell.miou_mean,
                "mIoU_std": cell.miou_std,
                "absent_classes_mean": cell.absent_classes_mean,
            }
            for cell in report.cells
        ],
        "runs": [run.to_json_dict() for run in report.runs],
        "histogram": [
            {"x": x, "class_count": count}
            for x, count in enumerate(report.histogram, start=1)
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cells_csv(report: SweepReport) -> str:
    lines = ["kind,k,mAcc_mean,mAcc_std,mIoU_mean,mIoU_std,absent_classes_mean"]
    for cell in report.cells:
        lines.append(
            f"{cell.kind},{cell.k},{cell.macc_mean!r},{cell.macc_std!r},"
            f"{cell.miou_mean!r},{cell.miou_std!r},{cell.absent_classes_mean!r}"
        )
    return "\n".join(lines) + "\n"


def curves_csv(report: SweepReport) -> str:
    lines = ["metric,kind,k,mean,std"]
    for metric, mean_of, std_of in (
        ("mAcc", lambda c: c.macc_mean, lambda c: c.macc_std),
        ("mIoU", lambda c: c.miou_mean, lambda c: c.miou_std),
    ):
        for cell in report.cells:
            lines.append(f"{metric},{cell.kind},{cell.k},{mean_of(cell)!r},{std_of(cell)!r}")
    return "\n".join(lines) + "\n"


def histogram_csv(report: SweepReport) -> str:
    lines = ["x,class_count"]
    for x, count in enumerate(report.histogram, start=1):
        lines.append(f"{x},{count}")
    return "\n".join(lines) + "\n"


def write_sweep_outputs(report: SweepReport, out_dir) -> list[Path]:
    """report.json, cells.csv, curves.csv, histogram.csv under out_dir."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create directory {out}: {exc}") from exc
    written = []
    for name, text in (
        ("report.json", report_json(report)),
        ("cells.csv", cells_csv(report)),
        ("curves.csv", curves_csv(report)),
        ("histogram.csv", histogram_csv(report)),
    ):
        path = out / name
        write_file(path, text.encode("utf-8"))
        written.append(path)
    return written
