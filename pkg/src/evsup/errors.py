"""Exception types shared across the package.

The CLI maps these onto exit codes: :class:`FormatError` (and ``OSError``)
to 2, every other :class:`EvsupError` to 3.
"""


class EvsupError(Exception):
    """Base class for package errors."""


class ContractError(EvsupError, ValueError):
    """A numeric precondition or contract was violated."""


class InvalidIntervalError(ContractError):
    """A time window with ``t0 >= t1``."""


class GeometryMismatchError(ContractError):
    """Two spatial objects disagree on (height, width)."""


class EmptyInputError(ContractError):
    """An operation that needs data received none."""


class FormatError(EvsupError):
    """A file could not be parsed as the expected format."""
