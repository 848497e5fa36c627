"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors exit 1, data errors exit 2,
runtime/training errors exit 3.
"""


class ShapeRegError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class UsageError(ShapeRegError):
    """Bad command-line invocation (unknown flag, missing argument)."""

    exit_code = 1


class DataError(ShapeRegError):
    """Invalid or inconsistent input data."""

    exit_code = 2


class ParseError(DataError):
    """Malformed annotation or container text; carries location context."""


class CorpusConsistencyError(DataError):
    """Landmark count or frame differs across a corpus."""


class DegenerateAnchorError(DataError):
    """Anchor group centroids coincide, rotation is undefined."""


class InvalidAnchorsError(DataError):
    """Anchor index groups are empty, overlapping, or out of range."""


class InsufficientDataError(DataError):
    """Too few corpus samples for the requested operation."""


class DimensionError(DataError):
    """Array or parameter-vector shape does not match the contract."""


class DegenerateExtentError(DataError):
    """Landmark bounding box has zero width or height."""


class EmptyDatasetError(DataError):
    """Operation requires at least one sample."""


class ManifestError(DataError):
    """Dataset manifest is malformed or references missing files."""


class ContainerFormatError(DataError):
    """Serialized model/checkpoint container is malformed."""


class ContainerVersionError(DataError):
    """Container format version is not supported."""


class ModelMismatchError(DataError):
    """Checkpoint fingerprint does not match the loaded shape model."""


class ArchitectureError(DataError):
    """Network stage plan is infeasible for the configured input size."""


class SampleRejectedError(DataError):
    """Augmentation pushed landmarks out of bounds; caller should resample."""


class TrainingDivergedError(ShapeRegError):
    """Loss became non-finite during optimization."""

    exit_code = 3
