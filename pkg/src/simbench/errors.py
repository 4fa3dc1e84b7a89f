"""Exception hierarchy.

Input/validation problems derive from :class:`InputError` (CLI exit code 2);
numerical failures derive from :class:`NumericalError` (CLI exit code 3).
"""

from __future__ import annotations


class SimbenchError(Exception):
    """Base class for all package errors."""


class InputError(SimbenchError, ValueError):
    pass


class NumericalError(SimbenchError, ArithmeticError):
    pass


class NonFinite(InputError):
    pass


class ZeroMatrix(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class InsufficientSamples(InputError):
    pass


class RankOutOfRange(InputError):
    pass


class NegativeSingularValue(InputError):
    pass


class LengthMismatch(InputError):
    pass


class TooFewSamples(InputError):
    pass


class MixedSampleCounts(InputError):
    pass


class SchemaError(InputError):
    """Invalid suite/report/config document. ``pointer`` is a JSON pointer."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class FileFormatError(InputError):
    """Malformed representation file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        where = f" (byte offset {offset})" if offset is not None else ""
        super().__init__(message + where)
        self.offset = offset


class BadMagic(FileFormatError):
    pass


class UnsupportedDtype(FileFormatError):
    pass


class NotTwoDimensional(FileFormatError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class DegenerateWeights(NumericalError):
    pass


class DivergenceDetected(NumericalError):
    pass
