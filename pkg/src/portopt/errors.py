"""Exception types shared across the package."""


class PortoptError(Exception):
    """Base class for all portopt errors."""


class ConfigError(PortoptError):
    """Invalid run configuration. CLI maps this to exit code 2."""


class DataError(PortoptError):
    """Malformed or inconsistent input data. CLI maps this to exit code 3."""


class ZeroVarianceError(DataError):
    """A series with zero variance where dispersion is required."""

    def __init__(self, asset_id: str):
        self.asset_id = asset_id
        super().__init__(f"zero-variance column: {asset_id}")


class NotPositiveDefiniteError(PortoptError):
    """Symmetric factorization hit a non-positive pivot."""

    def __init__(self, pivot_index: int, message: str | None = None):
        self.pivot_index = pivot_index
        super().__init__(
            message or f"matrix is not positive definite (pivot {pivot_index})"
        )


class DegenerateFrontierError(PortoptError):
    """Mean vector proportional to ones: the frontier collapses to a point."""


class LpIterationLimitError(PortoptError):
    """Simplex exceeded the pivot cap without terminating."""


class InfeasibleProblemError(PortoptError):
    """Optimization problem has an empty feasible set."""


class UnboundedProblemError(PortoptError):
    """Optimization objective is unbounded on the feasible set."""


class ConvergenceError(PortoptError):
    """Iterative estimation failed to converge. CLI maps this to exit code 4."""
