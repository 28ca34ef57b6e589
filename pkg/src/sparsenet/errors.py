"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` /
``FormatError`` -> 3, ``NumericError`` -> 4.
"""


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class FormatError(ValueError):
    """A file on disk is malformed or inconsistent with its header."""


class DataError(FormatError):
    """A dataset file failed validation."""


class ConfigError(ValueError):
    """An experiment configuration failed schema or semantic validation."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during training."""

    def __init__(self, message, *, step=None, layer=None):
        super().__init__(message)
        self.step = step
        self.layer = layer
