"""Exception types shared across the package.

Everything raised on purpose derives from XRHeadError so callers can catch
one base class at the CLI boundary.  Out-of-range integer indices (labels,
part ids) raise the builtin IndexError instead.
"""


class XRHeadError(Exception):
    """Base class for errors raised by this package."""


class ShapeMismatchError(XRHeadError):
    """Operands have incompatible shapes for the requested operation."""


class DegenerateInputError(XRHeadError):
    """Input is numerically degenerate, e.g. a zero vector fed to a normalizer."""


class BatchSizeError(XRHeadError):
    """Batch too small for an operation that needs batch statistics."""


class NumericError(XRHeadError):
    """A non-finite value appeared where the caller required finite math."""


class ConfigError(XRHeadError):
    """A configuration value or combination is invalid."""


class DataError(XRHeadError):
    """A dataset or its parameters are invalid."""


class FormatError(XRHeadError):
    """A binary file does not follow the expected layout.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
