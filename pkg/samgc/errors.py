class SamgcError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"


class ShapeError(SamgcError, ValueError):
    kind = "shape"


class ContractError(SamgcError):
    kind = "contract"


class ConfigurationError(SamgcError):
    kind = "config"


class DataError(SamgcError):
    kind = "data"


class CheckpointError(SamgcError):
    kind = "checkpoint"


class CorruptHeaderError(CheckpointError):
    kind = "corrupt-header"


class TruncatedCheckpointError(CheckpointError):
    kind = "truncated"


class VersionMismatchError(CheckpointError):
    kind = "version"
