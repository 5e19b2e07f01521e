"""Command-line front end.

Subcommands: fit, build, classify, eval, sweep, inspect. Exit codes: 0 on
success, 1 on validation or format errors (including bad usage), 2 on I/O
failures. Identical inputs and flags always produce byte-identical output
files; stdout is informational only.

Per-image rasters are looked up inside their directories as <id>.fgmsk and
<id>.fgcnf. Sweep parallelism comes from --threads, falling back to the
FGTK_THREADS environment variable, then to the core count.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    FileFormatError,
    IoFailure,
    MissingArtifact,
    ToolkitError,
    ValidationError,
)
from .fileio import Cursor, read_file, write_file
from .harness import SweepConfig, check_artifacts, run_sweep, write_sweep_outputs
from .mask import (
    CONFIDENCE_MAGIC,
    MASK_MAGIC,
    load_confidence,
    load_mask,
    propagate_label,
    threshold,
)
from .metrics import ConfusionMatrix, accumulate_image, accumulate_pixels, mean_accuracy, mean_iou
from .prototype import build_bank, classify_batch, load_bank, save_bank, score_matrix
from .store import MAGIC as EMBEDDINGS_MAGIC
from .store import load_embeddings
from .transform import MAGIC as MODEL_MAGIC
from .transform import TransformKind, fit_transform, load_model, save_model

PREDICTIONS_HEADER = ("id", "predicted_class_name", "predicted_index", "top1_score")


class _CliUsage(ValidationError):
    """Bad flags or arguments; rendered with usage text, exits 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep our code map
        raise _CliUsage(f"{message}\n{self.format_usage().rstrip()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fgtk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a feature transform on training embeddings")
    p.add_argument("train", help="training .fgemb file")
    p.add_argument("--kind", default="pca-whiten",
                   choices=[k.value for k in TransformKind])
    p.add_argument("--rank-cap", type=int, default=None)
    p.add_argument("--pre-normalize", action="store_true",
                   help="L2-normalize vectors before centering")
    p.add_argument("--out", required=True, help="output .fgptb model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("build", help="build a prototype bank from a fitted model")
    p.add_argument("train", help="training .fgemb file")
    p.add_argument("model", help="fitted .fgptb model file")
    p.add_argument("--out", required=True, help="output .fgptb bank file")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("classify", help="label embeddings with the nearest prototype")
    p.add_argument("bank", help=".fgptb bank file")
    p.add_argument("test", help="query .fgemb file")
    p.add_argument("--out", required=True, help="output predictions .csv")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--test", required=True, help="labeled test .fgemb file")
    p.add_argument("--masks", required=True, help="directory of <id>.fgmsk ground truth")
    p.add_argument("--confidence", required=True, help="directory of <id>.fgcnf maps")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--bank", help="classify in-process with this .fgptb bank")
    group.add_argument("--predictions", help="use a previously written predictions .csv")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output report .json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the k-shot grid and write reports")
    p.add_argument("--train", required=True, help="training .fgemb file")
    p.add_argument("--test", required=True, help="labeled test .fgemb file")
    p.add_argument("--masks", required=True, help="directory of <id>.fgmsk ground truth")
    p.add_argument("--confidence", required=True, help="directory of <id>.fgcnf maps")
    p.add_argument("--config", help="JSON config file; its fields override flags")
    p.add_argument("--k-values", default=None, help="comma-separated k grid")
    p.add_argument("--num-seeds", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated explicit seeds")
    p.add_argument("--kinds", default=None, help="comma-separated transform kinds")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--rank-cap", type=int, default=None)
    p.add_argument("--pre-normalize", action="store_true")
    p.add_argument("--fit-full-pool", action="store_true",
                   help="fit transforms on the full pool instead of each subset")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="print header metadata of any toolkit file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except (IoFailure, OSError) as exc:
        print(f"fgtk: io error: {exc}", file=sys.stderr)
        return 2
    except ToolkitError as exc:
        print(f"fgtk: error: {exc}", file=sys.stderr)
        return 1


def cmd_fit(args) -> None:
    train = load_embeddings(args.train)
    model = fit_transform(
        train,
        TransformKind.parse(args.kind),
        rank_cap=args.rank_cap,
        pre_normalize=args.pre_normalize,
    )
    save_model(model, args.out)
    spectrum = model.eigenvalues
    share = float(spectrum[:5].sum() / spectrum.sum())
    print(f"kind: {model.kind.value}")
    print(f"input dim: {model.dim_in}")
    print(f"retained rank: {model.rank}")
    print(f"top-5 eigenvalue share: {share:.4f}")
    print(f"wrote {args.out}")


def cmd_build(args) -> None:
    train = load_embeddings(args.train)
    model = load_model(args.model)
    bank = build_bank(train, model)
    save_bank(bank, args.out)
    absent = bank.absent_mask()
    print(f"classes: {bank.num_classes} ({int(absent.sum())} absent)")
    for name, count, gone in zip(bank.class_names, bank.support_counts, absent):
        marker = " (absent)" if gone else ""
        print(f"  {name}: {int(count)}{marker}")
    print(f"wrote {args.out}")


def cmd_classify(args) -> None:
    bank = load_bank(args.bank)
    test = load_embeddings(args.test)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTIONS_HEADER)
    if len(test):
        if test.dim != bank.model.dim_in:
            raise ValidationError(
                f"query dim {test.dim} != model dim_in {bank.model.dim_in}"
            )
        scores = score_matrix(bank, test.matrix(), ids=test.ids())
        indices = scores.argmax(axis=1)
        for row, (rec_id, idx) in enumerate(zip(test.ids(), indices)):
            top = float(scores[row, idx])
            writer.writerow([rec_id, bank.class_names[idx], int(idx), repr(top)])
    write_file(args.out, buf.getvalue().encode("utf-8"))
    print(f"{len(test)} predictions -> {args.out}")


def _load_rasters(directory, ids, suffix, loader, **kwargs) -> dict[str, np.ndarray]:
    base = Path(directory)
    table = {}
    for rec_id in ids:
        path = base / f"{rec_id}{suffix}"
        if path.is_file():
            table[rec_id] = loader(path, **kwargs)
    return table


def _read_predictions(path, test) -> np.ndarray:
    names = test.class_names
    by_id = {}
    text = read_file(path).decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != PREDICTIONS_HEADER:
        raise ValidationError(f"{path}: expected header {','.join(PREDICTIONS_HEADER)}")
    for row in rows[1:]:
        if len(row) != 4:
            raise ValidationError(f"{path}: malformed row {row!r}")
        rec_id, name, index_text, _score = row
        try:
            index = int(index_text)
        except ValueError:
            raise ValidationError(f"{path}: bad index {index_text!r} for '{rec_id}'") from None
        if not 0 <= index < len(names):
            raise ValidationError(f"{path}: index {index} out of range for '{rec_id}'")
        if name != names[index]:
            raise ValidationError(
                f"{path}: '{rec_id}' names class '{name}' but index {index} is '{names[index]}'"
            )
        if rec_id in by_id:
            raise ValidationError(f"{path}: duplicate prediction for '{rec_id}'")
        by_id[rec_id] = index
    missing = [rec_id for rec_id in test.ids() if rec_id not in by_id]
    if missing:
        raise ValidationError(f"{path}: no prediction for: " + ", ".join(missing))
    extra = set(by_id) - set(test.ids())
    if extra:
        raise ValidationError(f"{path}: predictions for unknown ids: " + ", ".join(sorted(extra)))
    return np.array([by_id[rec_id] for rec_id in test.ids()], dtype=np.int64)


def cmd_eval(args) -> None:
    test = load_embeddings(args.test)
    gt_labels = test.labels()
    if len(test) == 0:
        raise ValidationError("test set is empty")
    if (gt_labels < 0).any():
        bad = test.records[int(np.where(gt_labels < 0)[0][0])].id
        raise ValidationError(f"test record '{bad}' has no class label")
    C = test.num_classes

    if args.bank:
        bank = load_bank(args.bank)
        predictions = np.array([idx for _, idx in classify_batch(bank, test)], dtype=np.int64)
    else:
        predictions = _read_predictions(args.predictions, test)

    gt_masks = _load_rasters(args.masks, test.ids(), ".fgmsk", load_mask, num_classes=C)
    confidence = _load_rasters(args.confidence, test.ids(), ".fgcnf", load_confidence)
    check_artifacts(test, gt_masks, confidence)

    image_cm = ConfusionMatrix(C)
    pixel_cm = ConfusionMatrix(C)
    for rec_id, gt, pred in zip(test.ids(), gt_labels, predictions):
        accumulate_image(image_cm, int(gt), int(pred))
        pred_mask = propagate_label(threshold(confidence[rec_id], args.tau), int(pred))
        accumulate_pixels(pixel_cm, gt_masks[rec_id], pred_mask)
    macc, acc_per_class, acc_count = mean_accuracy(image_cm)
    miou, iou_per_class, iou_count = mean_iou(pixel_cm)

    payload = {
        "tau": args.tau,
        "num_classes": C,
        "image_count": len(test),
        "mAcc": macc,
        "mAcc_evaluated_classes": acc_count,
        "mIoU": miou,
        "mIoU_evaluated_classes": iou_count,
        "per_class": [
            {
                "name": test.class_names[c],
                "accuracy": None if np.isnan(acc_per_class[c]) else float(acc_per_class[c]),
                "iou": None if np.isnan(iou_per_class[c]) else float(iou_per_class[c]),
            }
            for c in range(C)
        ],
    }
    write_file(args.out, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    print(f"mAcc: {macc:.4f} over {acc_count} classes")
    print(f"mIoU: {miou:.4f} over {iou_count} classes")
    print(f"wrote {args.out}")


def _split_csv_flag(text: str, what: str) -> list[str]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValidationError(f"{what} must name at least one value")
    return parts


_CONFIG_KEYS = (
    "k_values", "num_seeds", "seeds", "kinds", "tau",
    "rank_cap", "pre_normalize", "fit_full_pool",
)


def _sweep_config(args) -> SweepConfig:
    fields: dict = {}
    if args.k_values is not None:
        try:
            fields["k_values"] = tuple(int(p) for p in _split_csv_flag(args.k_values, "--k-values"))
        except ValueError:
            raise ValidationError(f"--k-values: not an integer list: {args.k_values!r}") from None
    if args.num_seeds is not None:
        fields["num_seeds"] = args.num_seeds
    if args.seeds is not None:
        try:
            fields["seeds"] = tuple(int(p) for p in _split_csv_flag(args.seeds, "--seeds"))
        except ValueError:
            raise ValidationError(f"--seeds: not an integer list: {args.seeds!r}") from None
    if args.kinds is not None:
        fields["kinds"] = tuple(
            TransformKind.parse(p) for p in _split_csv_flag(args.kinds, "--kinds")
        )
    if args.tau is not None:
        fields["tau"] = args.tau
    if args.rank_cap is not None:
        fields["rank_cap"] = args.rank_cap
    if args.pre_normalize:
        fields["pre_normalize"] = True
    if args.fit_full_pool:
        fields["fit_full_pool"] = True

    if args.config:
        try:
            loaded = json.loads(read_file(args.config).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(loaded) - set(_CONFIG_KEYS))
        if unknown:
            raise ValidationError(f"{args.config}: unknown config keys: {', '.join(unknown)}")
        if "k_values" in loaded:
            loaded["k_values"] = tuple(loaded["k_values"])
        if "seeds" in loaded and loaded["seeds"] is not None:
            loaded["seeds"] = tuple(loaded["seeds"])
        if "kinds" in loaded:
            loaded["kinds"] = tuple(TransformKind.parse(k) for k in loaded["kinds"])
        fields.update(loaded)
    return SweepConfig(**fields)


def _resolve_threads(flag_value) -> int | None:
    if flag_value is not None:
        value = flag_value
    elif os.environ.get("FGTK_THREADS"):
        raw = os.environ["FGTK_THREADS"]
        try:
            value = int(raw)
        except ValueError:
            raise ValidationError(f"FGTK_THREADS must be an integer, got {raw!r}") from None
    else:
        return None
    if value < 1:
        raise ValidationError(f"thread count must be >= 1, got {value}")
    return value


def cmd_sweep(args) -> None:
    config = _sweep_config(args)
    threads = _resolve_threads(args.threads)
    train = load_embeddings(args.train)
    test = load_embeddings(args.test)
    gt_masks = _load_rasters(args.masks, test.ids(), ".fgmsk", load_mask,
                             num_classes=test.num_classes)
    confidence = _load_rasters(args.confidence, test.ids(), ".fgcnf", load_confidence)
    report = run_sweep(config, train, test, gt_masks, confidence, threads=threads)
    written = write_sweep_outputs(report, args.out)
    for path in written:
        print(f"wrote {path}")


def cmd_inspect(args) -> None:
    data = read_file(args.path)
    cur = Cursor(data, source=str(args.path))
    magic = bytes(data[:6])
    if magic == EMBEDDINGS_MAGIC:
        cur.take(6)
        count = cur.u32()
        dim = cur.u32()
        num_classes = cur.u32()
        names = [cur.string() for _ in range(num_classes)]
        print("format: FGEMB (embeddings)")
        print(f"records: {count}")
        print(f"dim: {dim}")
        print(f"classes: {num_classes}")
        for name in names:
            print(f"  {name}")
    elif magic == MODEL_MAGIC:
        cur.take(6)
        code = cur.u8()
        pre = bool(code & 0x80)
        kinds = {0: "norm", 1: "pca", 2: "pca-whiten"}
        kind = kinds.get(code & 0x7F, f"unknown({code:#x})")
        dim_in = cur.u32()
        rank = cur.u32()
        print("format: FGPTB (transform model / prototype bank)")
        print(f"kind: {kind}")
        print(f"pre-normalize: {'yes' if pre else 'no'}")
        print(f"input dim: {dim_in}")
        print(f"rank: {rank}")
        basis_rows = 0 if (code & 0x7F) == 0 else rank
        cur.take(4 * dim_in)            # mean
        cur.take(4 * basis_rows * dim_in)
        cur.take(4 * rank)              # scale
        cur.take(4 * rank)              # eigenvalues
        if cur.remaining:
            num_classes = cur.u32()
            names = [cur.string() for _ in range(num_classes)]
            print(f"prototype classes: {num_classes}")
            for name in names:
                print(f"  {name}")
        else:
            print("prototype section: none")
    elif magic == CONFIDENCE_MAGIC:
        cur.take(6)
        w = cur.u32()
        h = cur.u32()
        print("format: FGCNF (confidence map)")
        print(f"size: {w}x{h}")
    elif magic == MASK_MAGIC:
        cur.take(6)
        w = cur.u32()
        h = cur.u32()
        print("format: FGMSK (label mask)")
        print(f"size: {w}x{h}")
    else:
        raise FileFormatError(f"{args.path}: unrecognized magic {bytes(data[:6])!r}")


if __name__ == "__main__":
    sys.exit(main())
