"""Exception types raised by the estimators and solvers."""


class NetspillError(Exception):
    """Base class for package errors."""


class DimensionError(NetspillError, ValueError):
    """Inputs have incompatible sizes."""


class DegenerateDesignError(NetspillError):
    """A regression denominator or moment matrix is zero or singular."""


class SingularCorrectionError(NetspillError):
    """The bias correction factor ``1 + eta`` is (numerically) zero."""


class DivergenceError(NetspillError):
    """A Neumann series failed to converge."""


class InfeasiblePlacementError(NetspillError):
    """Not enough eligible cells to place the requested missing links."""


class MissingStatsError(NetspillError):
    """Degree statistics needed by an estimator are absent."""


class FitError(NetspillError):
    """A model fit failed or hit a search bound."""


class QuadratureError(NetspillError):
    """Adaptive quadrature did not stabilise."""
