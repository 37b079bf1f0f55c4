"""Error types raised by the laboratory.

Every error that a caller may want to catch programmatically gets its own
class.  All inherit from FlockLabError so blanket handling stays possible,
and each carries a ``detail`` dict that serializes into machine-readable
error reports.
"""

from __future__ import annotations


class FlockLabError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.message = message
        self.detail = dict(detail)

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "detail": self.detail,
        }


class CollisionalState(FlockLabError):
    """Two particles share a position (or sit below the safe-distance floor),
    so the interaction kernel is not evaluable."""


class StepCollapse(FlockLabError):
    """The adaptive integrator drove the step size below its floor; carries
    the closest pair so the caller can see which encounter caused it."""


class AmbiguousGrouping(FlockLabError):
    """Position grouping at a positive tolerance is order dependent: chaining
    nearby atoms produced a cluster wider than the tolerance."""


class SupportTooLarge(FlockLabError):
    """The union support of the two measures exceeds the configured size cap
    for the exact flat-metric program.  Subsample or coarsen first."""


class DivergentNormalization(FlockLabError):
    """The kernel normalization integral diverges for the requested exponent
    and dimension (alpha < d)."""


class UnsupportedDimension(FlockLabError):
    """Closed forms for the kernel normalization exist only in dimensions
    one and two."""


class SnapshotMissing(FlockLabError):
    """A requested time is not on the stored snapshot grid."""


class GridMismatch(FlockLabError):
    """Two local-field objects do not share bin width and origin."""


class RejectionOverflow(FlockLabError):
    """Rejection sampling failed to produce an admissible draw within the
    attempt budget."""
