from typing import List, Sequence


class LandauLabError(Exception):
    """Base class for every error raised by landau_lab."""


class InvariantBreach(LandauLabError):
    """
    A physics or numerics invariant failed at run time.
    The command line maps this family to exit code 2.
    """


class PenroseViolation(InvariantBreach):
    """The dispersion function came too close to zero."""


class NeutralityBreach(InvariantBreach):
    """The total charge (zero mode of the density) is not zero."""


class VelocityBoxOverflow(InvariantBreach):
    """Distribution mass reached the edge of the truncated velocity box."""


class FrameAliasingError(InvariantBreach):
    """A gliding-frame mode oscillates faster than the velocity grid resolves."""


class WeightOverflowError(InvariantBreach):
    """A Gevrey weight overflowed double precision even in log space."""

    def __init__(self, message: str, k=None, location=None):
        super().__init__(message)
        self.k = k
        self.location = location


class EmbeddingViolation(InvariantBreach):
    """The density functional is positive while the distribution functional vanishes."""


class NonFiniteValuesError(InvariantBreach):
    """A computation produced NaN or infinite values."""


class StabilityLimitError(InvariantBreach):
    """A step size exceeds the configured transport or acceleration limit."""


class CrossCheckFailure(InvariantBreach):
    """Two independent computations of the same quantity disagree."""


class ConfigValidationError(LandauLabError, ValueError):
    """
    A run configuration violates one or more constraints.

    Attributes:
        errors: every violated constraint, one human readable line each.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors: List[str] = list(errors)
        super().__init__(
            "Invalid run configuration:\n" + "\n".join(f"  - {e}" for e in self.errors)
        )
