"""Exception hierarchy shared across the package."""


class CharnetError(Exception):
    """Base class for all package errors."""


class DataError(CharnetError):
    """Unusable input data: missing files, malformed rows, bad labels."""


class ShapeError(CharnetError):
    """Tensor or configuration shapes are inconsistent."""


class NumericError(CharnetError):
    """A numeric failure such as a NaN loss during training."""


class CheckpointError(CharnetError):
    """A checkpoint file is unreadable, corrupted, or incompatible."""
