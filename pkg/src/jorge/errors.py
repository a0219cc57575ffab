"""Exception hierarchy shared by every module in the package."""


class JorgeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(JorgeError, ValueError):
    """Operands do not have conformable shapes."""


class NumericError(JorgeError, ArithmeticError):
    """A computation produced or would produce a non-finite / undefined value."""


class ConfigError(JorgeError, ValueError):
    """Invalid hyperparameter or experiment configuration."""


class DomainError(JorgeError, ValueError):
    """An argument is outside the mathematical domain of a function."""
