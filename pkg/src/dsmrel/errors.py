"""Exception types raised across the package."""


class DsmError(Exception):
    """Base class for all package errors."""


class MalformedMarkup(DsmError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GazetteerError(DsmError):
    pass


class UnknownFeature(DsmError):
    pass


class InvalidCounts(DsmError):
    pass


class ParseError(DsmError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TypeConflict(DsmError):
    pass


class DegenerateSplit(DsmError):
    pass


class ShapeMismatch(DsmError):
    pass


class NonFiniteLoss(DsmError):
    pass


class UnknownNode(DsmError):
    pass


class StageError(DsmError):
    """A pipeline stage failed; wraps the underlying error."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
