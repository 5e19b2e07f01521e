"""Typed errors shared by every module in the toolkit.

Two broad families: FileFormatError for structurally invalid container
files, ValidationError for inputs that violate an operation's contract.
The CLI maps ValidationError/FileFormatError to exit code 1 and
IoFailure/OSError to exit code 2.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class FileFormatError(ToolkitError):
    """A toolkit container file is structurally invalid."""


class MagicMismatch(FileFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(FileFormatError):
    """File ends before its declared payload does."""


class BadSentinel(FileFormatError):
    """A raster label is neither a valid class index nor a known sentinel."""


class MissingPrototypeSection(FileFormatError):
    """Container holds a transform model only, no prototype section."""


class ValidationError(ToolkitError):
    """Input violates an operation's preconditions or a type invariant."""


class DimMismatch(ValidationError):
    """Vector or matrix dimensions disagree with the owning container."""


class BadClassIndex(ValidationError):
    """Class index out of range for the class table in effect."""


class NonFiniteValue(ValidationError):
    """NaN or infinity where finite values are required."""


class UnknownId(ValidationError):
    """Requested record id is not present in the set."""


class TooFewSamples(ValidationError):
    """Not enough records to fit the requested transform."""


class DegenerateCovariance(ValidationError):
    """All covariance eigenvalues fall below the numerical floor."""


class ZeroVector(ValidationError):
    """Vector norm below the normalization floor."""


class NoLabeledRecords(ValidationError):
    """Prototype construction needs at least one labeled record."""


class EmptyBank(ValidationError):
    """No class in the bank has a usable prototype."""


class BadTau(ValidationError):
    """Threshold outside [0, 1]."""


class DimensionMismatch(ValidationError):
    """Two rasters that must share dimensions do not."""


class EmptyMatrix(ValidationError):
    """Confusion matrix has no evaluable classes."""


class MissingArtifact(ValidationError):
    """An id present in the embeddings lacks its mask or confidence map."""


class IoFailure(ToolkitError):
    """Filesystem write failed; wraps the underlying OSError."""
