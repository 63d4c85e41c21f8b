"""Exception types shared across the library.

Numerical failures get their own classes so callers (and the CLI) can
distinguish them from plain usage errors.
"""


class StructmatError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(StructmatError, ValueError):
    """Operands do not conform (shapes, block partitions, operator sizes)."""


class PivotBreakdown(StructmatError):
    """A pivot fell below the breakdown threshold during unpivoted elimination."""

    def __init__(self, step, pivot, message=None):
        self.step = step
        self.pivot = pivot
        super().__init__(message or f"pivot breakdown at step {step}: |pivot| = {abs(pivot):.3e}")


class PoleCollision(StructmatError):
    """A Cauchy node pair coincides (y_i == x_j)."""


class ZeroY(StructmatError):
    """A Cauchy y-node is zero, so diag(1/y) is undefined."""


class SingularOperator(StructmatError):
    """The displacement operator pair is not Stein-solvable (some a_i * b_j == 1)."""


class SeriesDivergence(StructmatError):
    """The reconstruction series diverges (|a_i * b_j| >= 1 and neither operator nilpotent)."""


class UnsupportedOperator(StructmatError):
    """The requested fast path does not exist for this operator combination."""


class BandViolation(StructmatError, ValueError):
    """A matrix claimed to be banded has entries outside the band."""


class FormatError(StructmatError, ValueError):
    """A structured-matrix text file is malformed."""
