"""Exception hierarchy shared by every diagnostic module."""


class LapcapError(Exception):
    """Base class for all toolkit errors."""


class NumericalDomainError(LapcapError):
    """A probe point left its declared domain or a map returned a non-finite value."""


class ShapeError(LapcapError, ValueError):
    pass


class ValidationError(LapcapError, ValueError):
    """A model, term or log violates a structural invariant."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class UnsupportedModelError(LapcapError):
    pass


class CapacityError(LapcapError):
    pass


class PreconditionError(LapcapError, ValueError):
    pass


class TypeMismatchError(LapcapError, TypeError):
    pass


class CoverageError(LapcapError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SchemaError(LapcapError):
    """Scenario parse or schema failure.

    ``line`` and ``column`` are set for parse failures; ``path`` holds the
    JSON field path for schema violations.
    """

    def __init__(self, message, line=None, column=None, path=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.path = path
