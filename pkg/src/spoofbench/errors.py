"""Exception taxonomy shared across the workbench."""


class SpoofbenchError(Exception):
    """Base class for all workbench errors."""


class DimensionError(SpoofbenchError):
    """Operand shapes do not conform."""


class ConfigError(SpoofbenchError):
    """A configuration value is outside its documented range."""


class TapeStateError(SpoofbenchError):
    """Gradient information was requested for an op that was never taped."""


class InputError(SpoofbenchError):
    """A runtime input violates a precondition (missing file, empty split, ...)."""


class SnapshotError(SpoofbenchError):
    """A binary tensor snapshot is malformed."""


class ManifestError(SpoofbenchError):
    """A dataset manifest cannot be parsed."""


class LabelValidationError(SpoofbenchError):
    """An attribute label vector violates the label schema."""


class ProtocolError(SpoofbenchError):
    """An evaluation protocol precondition is violated."""


class NonFiniteLossError(SpoofbenchError):
    """Training produced a non-finite loss; carries batch diagnostics."""
