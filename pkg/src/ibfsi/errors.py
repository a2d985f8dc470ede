"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument does not satisfy an operation's stated precondition."""


class OutOfSupportError(ValueError):
    """A structure node sits too close to the domain boundary for its kernel."""


class SingularTangentError(ValueError):
    """Adjacent fiber nodes coincide; the fiber tangent is undefined."""


class LocationError(ValueError):
    """A reference point lies outside every element of a mesh."""


class LinearSolverError(RuntimeError):
    """A linear solve failed (singular matrix or Krylov non-convergence)."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NonconvergenceError(RuntimeError):
    """An iterative procedure exceeded its iteration budget."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class FitError(RuntimeError):
    """Parameter fitting failed or was fed unusable data."""


class SceneSpecError(ValueError):
    """A geometry generator received degenerate or inconsistent parameters."""


class ConfigError(ValueError):
    """A run configuration is invalid."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable or from an incompatible version."""
