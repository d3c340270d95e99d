"""Exception hierarchy.

Every error raised by this package derives from GdnnError so callers can
catch one base class. The CLI maps each branch to a distinct exit code.
"""


class GdnnError(Exception):
    """Base class for all package errors."""


class ConfigError(GdnnError):
    """Invalid configuration value: bad layer spec, unknown backend,
    width request outside the trained range, malformed plan."""


class DimensionError(GdnnError):
    """Tensor shape does not match what an operation requires."""


class InputError(GdnnError):
    """Invalid runtime input: empty dataset, label out of range,
    too few repetitions."""


class StateError(GdnnError):
    """Operation invoked in the wrong lifecycle state: backward before
    forward, training step out of order."""


class IngestError(GdnnError):
    """Raw data ingestion failure. Carries the byte offset at which
    parsing failed when one is known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FormatError(GdnnError):
    """Serialized container violates its format contract."""


class CheckpointError(FormatError):
    """Model checkpoint file is unreadable."""


class BadMagicError(CheckpointError):
    """Leading magic bytes are wrong."""


class BadVersionError(CheckpointError):
    """Container version is unsupported."""


class TruncatedError(CheckpointError):
    """File ends before a declared record is complete."""


class DimMismatchError(CheckpointError):
    """A stored tensor's dimensions disagree with the declared model."""


class ProfileError(FormatError):
    """Operating-point profile CSV is malformed. `reason` is a short
    machine-checkable code: bad_header, bad_number, duplicate_point,
    bad_latency, bad_power, bad_accuracy, inconsistent_accuracy,
    bad_config, empty."""

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class InfeasibleError(GdnnError):
    """No operating point satisfies the budget. Carries the best
    achievable value of the budgeted metric."""

    def __init__(self, message: str, min_achievable: float | None = None):
        if min_achievable is not None:
            message = f"{message} (best achievable: {min_achievable:g})"
        super().__init__(message)
        self.min_achievable = min_achievable


class MeasurementError(GdnnError):
    """Timing measurement could not be taken reliably."""
