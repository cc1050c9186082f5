"""Exception hierarchy shared across the package."""


class FailSearchError(Exception):
    """Base class for all package errors."""


class ValidationError(FailSearchError, ValueError):
    """Bad user input (maps to CLI exit code 1)."""


class InvalidConfig(ValidationError):
    pass


class InvalidSchema(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class FormatError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DegenerateData(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class SampleTooSmall(ValidationError):
    pass


class EmptySeedSet(ValidationError):
    pass
