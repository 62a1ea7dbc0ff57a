"""Exception hierarchy shared by all modules."""


class ReadoutError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ReadoutError, ValueError):
    """Invalid dimensions, ranges or configuration values."""


class DegenerateInputError(ReadoutError):
    """Input matrix has an all-zero row where a normalized row is required."""

    def __init__(self, row, msg=None):
        self.row = row
        super().__init__(msg or f"row {row} of the input matrix is zero")


class DegenerateBasisError(ReadoutError):
    """Selected rows are (numerically) linearly dependent."""

    def __init__(self, msg, index=None):
        self.index = index
        super().__init__(msg)


class RankExhaustedError(ReadoutError):
    """All residual mass vanished before the requested basis size was reached."""


class PostSelectionError(ReadoutError):
    """Requested outcome has (numerically) zero probability."""


class PreconditionError(ReadoutError):
    """A documented precondition of an operation does not hold."""


class InconsistentEstimatesError(ReadoutError):
    """Sampled overlap estimates are statistically inconsistent."""


class NoSolutionComponentError(ReadoutError):
    """Right-hand side has no component in the column space."""
