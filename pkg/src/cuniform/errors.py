"""Exception types raised across the package."""


class CUniformError(Exception):
    """Base class for package errors."""


class InadmissibleControlError(CUniformError, ValueError):
    """A control lies outside the model's admissible box."""


class OutOfDomainError(CUniformError, ValueError):
    """A state lies outside the bounded grid (non-angular dimension)."""


class DeadLevelError(CUniformError):
    """Every propagation out of a level left the grid."""

    def __init__(self, t: int, message: str | None = None):
        self.t = t
        super().__init__(message or f"level {t} has no in-bounds successors")


class AllCollidingError(CUniformError):
    """Every sampled trajectory in a control cycle has infinite cost."""


class IncompatiblePolicyError(CUniformError):
    """A policy file does not match the model/grid/action configuration."""


class ConfigError(CUniformError, ValueError):
    """Invalid experiment configuration."""
