"""Exception hierarchy shared across the package."""


class PPDAUCError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PPDAUCError, ValueError):
    pass


class NumericError(PPDAUCError, ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(PPDAUCError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class LabelError(PPDAUCError, ValueError):
    pass


class ClassMissingError(PPDAUCError, ValueError):
    """A computation needed examples from a class (or class pair) that is absent."""


class EmptyInputError(PPDAUCError, ValueError):
    pass


class ParseError(PPDAUCError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnsupportedError(PPDAUCError, ValueError):
    pass


class EstimatorNotReady(PPDAUCError, RuntimeError):
    """Raised when a class-prior snapshot is requested before both labels were seen."""
