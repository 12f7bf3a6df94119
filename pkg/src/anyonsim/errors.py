"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config problems exit 2,
trajectory/runtime failures exit 3, resource caps exit 4.
"""

from __future__ import annotations


class AnyonsimError(Exception):
    """Base class for all package errors."""


class ShapeError(AnyonsimError):
    """Operator/matrix dimensions are inconsistent."""


class ValidityError(AnyonsimError):
    """An input violates a mathematical precondition (Hermiticity, PSD, normalization...)."""


class ParameterError(AnyonsimError):
    """A scalar parameter is out of its admissible range."""


class SizeError(AnyonsimError):
    """A dimension cap was exceeded."""


class NumericError(AnyonsimError):
    """A numerical routine failed to converge or lost accuracy."""


class AccuracyError(NumericError):
    """A self-consistency check (e.g. step halving) exceeded its tolerance."""


class TrajectoryError(AnyonsimError):
    """A single stochastic trajectory aborted.

    Carries the step index at which the state left the physical set and the
    stream id of the offending trajectory.
    """

    def __init__(self, message: str, step: int, stream_id: int | None = None):
        super().__init__(message)
        self.step = step
        self.stream_id = stream_id


class EnsembleError(AnyonsimError):
    """One or more trajectories of an ensemble aborted."""

    def __init__(self, message: str, stream_ids: list[int]):
        super().__init__(message)
        self.stream_ids = stream_ids


class ConfigError(AnyonsimError):
    """A run configuration failed validation.

    ``path`` locates the offending key with a dotted path, e.g.
    ``system.links.0.amplitude``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
