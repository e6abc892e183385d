"""Exception types shared across the package."""


class ConnectoError(Exception):
    """Base class for all package errors."""


class ParameterError(ConnectoError, ValueError):
    """A parameter lies outside its documented domain."""


class DataError(ConnectoError, ValueError):
    """Input data violates a documented precondition."""


class ShapeError(DataError):
    """Array dimensions do not match the expected layout."""


class InsufficientDataError(DataError):
    """Too few rows/columns for the requested operation."""


class IngestionError(DataError):
    """A file could not be parsed; the message names the offending cell."""


class StageError(ConnectoError, RuntimeError):
    """A pipeline stage failed; carries the stage name for context."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
