"""Few-shot fine-grained segmentation evaluation toolkit.

Workflow: load embeddings (store), fit a feature transform (transform),
build per-class prototypes (prototype), turn confidence maps into class
masks (mask), score with confusion-matrix metrics (metrics), and sweep
k-shot subsets across seeds (harness). The cli module binds it together.
"""

from .errors import (
    BadClassIndex,
    BadSentinel,
    BadTau,
    DegenerateCovariance,
    DimMismatch,
    DimensionMismatch,
    EmptyBank,
    EmptyMatrix,
    FileFormatError,
    IoFailure,
    MagicMismatch,
    MissingArtifact,
    MissingPrototypeSection,
    NoLabeledRecords,
    NonFiniteValue,
    ToolkitError,
    TooFewSamples,
    TruncatedFile,
    UnknownId,
    ValidationError,
    ZeroVector,
)
from .harness import (
    RunResult,
    SweepConfig,
    SweepReport,
    run_once,
    run_sweep,
    sample_subset,
    write_sweep_outputs,
)
from .mask import (
    BACKGROUND,
    IGNORE,
    load_confidence,
    load_mask,
    propagate_label,
    save_confidence,
    save_mask,
    threshold,
)
from .metrics import (
    ConfusionMatrix,
    accumulate_image,
    accumulate_pixels,
    mean_accuracy,
    mean_iou,
    merge,
)
from .prototype import (
    PrototypeBank,
    build_bank,
    classify,
    classify_batch,
    load_bank,
    save_bank,
    score_matrix,
)
from .store import (
    EmbeddingRecord,
    EmbeddingSet,
    load_embeddings,
    save_embeddings,
    subset_by_ids,
)
from .transform import (
    TransformKind,
    TransformModel,
    apply,
    fit_transform,
    load_model,
    project,
    save_model,
)

__version__ = "0.1.0"
