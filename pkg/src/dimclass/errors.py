"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``DegenerateError`` -> 3.
"""


class DataError(ValueError):
    """Malformed, missing or inconsistent input data."""


class DegenerateError(ArithmeticError):
    """A numeric procedure cannot produce a meaningful result."""
