"""Exception types shared across the package."""

from __future__ import annotations


class FracMCError(Exception):
    """Base class for all package errors."""


# randomness sources
class EntropyFileError(FracMCError):
    pass


class TruncatedWord(EntropyFileError):
    pass


class FileTooShort(EntropyFileError):
    pass


class Exhausted(FracMCError):
    """Raised when an entropy source cannot supply the requested words."""

    def __init__(self, requested: int, remaining: int, message: str | None = None):
        self.requested = int(requested)
        self.remaining = int(remaining)
        super().__init__(
            message
            or f"entropy source exhausted: requested {self.requested} words, "
            f"{self.remaining} remaining"
        )


# numerics
class NumericalError(FracMCError):
    pass


class NegativeEigenvalue(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularPoint(NumericalError):
    pass


class ZeroRealizedVariance(NumericalError):
    pass


# data / validation
class DataError(FracMCError):
    pass


class TooFewPaths(DataError):
    pass


class DegenerateSeries(DataError):
    pass


class BlocksTooSmall(DataError):
    pass


class GridMismatch(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class WindowTooLong(DataError):
    pass


class MissingColumn(DataError):
    pass


class UnparsableNumber(DataError):
    pass


class EmptyFile(DataError):
    pass
