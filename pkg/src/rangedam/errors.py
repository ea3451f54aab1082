"""Exception taxonomy shared across the package.

Domain errors all derive from RangeDamError so the CLI can map any of them
to exit code 1 with a one-line diagnostic.
"""


class RangeDamError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(RangeDamError):
    """A binary file does not match its declared layout (magic, length, version)."""


class ValidationError(RangeDamError, ValueError):
    """A value violates a documented invariant (non-finite data, bad shape on a container)."""


class ShapeError(RangeDamError, ValueError):
    """Operands have incompatible tensor shapes."""


class BoundsError(RangeDamError, ValueError):
    """An index or coordinate falls outside its valid range."""


class DegeneratePointError(RangeDamError, ValueError):
    """Azimuth requested for a point on the sensor axis (x = y = 0)."""


class DegeneratePoolError(ShapeError):
    """Spatial pooling over an empty extent (H*W = 0)."""


class RingInferenceError(RangeDamError):
    """Azimuth-wrap ring inference found more rings than the declared image height."""


class EvaluationError(RangeDamError):
    """A metric is undefined for the accumulated data (e.g. no scored classes)."""


class TrainingDivergenceError(RangeDamError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
