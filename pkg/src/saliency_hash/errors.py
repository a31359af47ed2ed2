"""Exception hierarchy shared by every module."""


class SaliencyHashError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SaliencyHashError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(SaliencyHashError, ValueError):
    """A precondition of an operation was violated."""


class DataError(SaliencyHashError):
    """Input data is missing, malformed, or cannot satisfy a request."""


class DivergenceError(SaliencyHashError, FloatingPointError):
    """Training produced a non-finite loss."""


class FormatError(SaliencyHashError):
    """A binary file (checkpoint or codes file) could not be decoded."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ShapeMismatchError(FormatError, ShapeError):
    pass
