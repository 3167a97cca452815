"""Exception hierarchy shared by every module."""


class SpiderMeshError(Exception):
    """Base class for all package errors."""


class ValidationError(SpiderMeshError, ValueError):
    """A record violates one of its invariants.

    ``field`` names the offending attribute so callers can report it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DimensionMismatchError(ValidationError):
    pass


class OutOfRangeLabelError(ValidationError):
    pass


class NonFiniteValueError(ValidationError):
    pass


class ChannelMismatchError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class ScaleMismatchError(ValidationError):
    pass


class InvalidRangeError(ValidationError):
    pass


class CropLargerThanImageError(ValidationError):
    pass


class MissingParameterError(SpiderMeshError, KeyError):
    def __str__(self):
        return f"missing parameter: {self.args[0]}"


class MissingLabelError(SpiderMeshError, ValueError):
    pass


class EmptyDatasetError(SpiderMeshError, ValueError):
    pass


class DivergenceError(SpiderMeshError, FloatingPointError):
    pass


class AllClassesUndefinedError(SpiderMeshError, ValueError):
    pass


class ConfigError(SpiderMeshError, ValueError):
    pass


class DatasetError(SpiderMeshError, OSError):
    pass


class MissingFileError(DatasetError):
    pass


class UndecodableImageError(DatasetError):
    pass


class SizeMismatchError(DatasetError):
    pass


class CheckpointError(SpiderMeshError, OSError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class CorruptPayloadError(CheckpointError):
    pass
