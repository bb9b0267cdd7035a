"""Exception types shared across the package.

``ValidationError`` covers bad inputs and configuration (CLI exit code 1),
``NumericalError`` covers runtime numerical failures such as singular
systems or undefined statistics (CLI exit code 2).
"""


class ValidationError(ValueError):
    """Invalid input data, file contents, or configuration."""


class NumericalError(RuntimeError):
    """A numerical operation could not be completed as requested."""
