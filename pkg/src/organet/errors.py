class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(Exception):
    """Base class for dataset problems."""


class MissingFileError(DataError, FileNotFoundError):
    pass


class DecodeError(DataError):
    pass


class ShapeMismatchError(DataError, ValueError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class NumericFailure(RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(RuntimeError):
    """Checkpoint cannot be loaded against its embedded configuration."""
