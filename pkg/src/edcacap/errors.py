"""Exception types shared across the package."""


class ScenarioError(ValueError):
    """A configuration document violates the schema or an invariant.

    ``path`` locates the offending field, e.g. ``acs[1].cw_min``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.reason = message
        super().__init__(f"{path}: {message}")


class ZoneError(ValueError):
    """The contention-zone structure is degenerate for the given parameters."""


class ConvergenceError(RuntimeError):
    """A fixed-point iteration did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)
