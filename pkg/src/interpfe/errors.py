"""Exception types raised across the toolkit.

The CLI maps these onto exit codes, so every failure that can reach a user
should be one of them.
"""


class InterpFEError(Exception):
    """Base class for all toolkit errors."""


class ArgumentError(InterpFEError, ValueError):
    """Bad argument value or dimension mismatch."""


class CapabilityError(InterpFEError, NotImplementedError):
    """Requested degree/kind/feature is outside what is supported."""


class OutOfRangeError(ArgumentError):
    """Evaluation point lies outside the parametric domain of a space."""


class GeometryError(InterpFEError):
    """Mesh generation, point location, or containment failure."""


class PreconditionError(InterpFEError):
    """An operation was invoked on inputs that violate its preconditions."""


class ConfigError(InterpFEError, ValueError):
    """Invalid run configuration."""


class SolverError(InterpFEError, RuntimeError):
    """Linear solve failed; ``report`` carries the diagnostics gathered so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StageError(InterpFEError):
    """Wraps an error raised inside one stage of the end-to-end pipeline."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error
