"""Exception types shared across the package."""


class CrossHedgeError(Exception):
    """Base class for package-specific failures."""


class EstimationDegenerateError(CrossHedgeError):
    """Raised when realized-variance estimators see no usable variation."""


class UnsupportedRegimeError(CrossHedgeError):
    """Raised for parameter regimes the filter formulas do not cover
    (perfect correlation with unequal prior variances)."""


class SolverFailureError(CrossHedgeError):
    """Raised when a PDE/VI solve diverges or fails to converge.

    Carries a ``diagnostics`` dict (step, residual, iteration counts).
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(CrossHedgeError):
    """Raised when an exponential moment does not exist (uncapped payoff)."""


class BoundaryUndefinedError(CrossHedgeError):
    """Raised when an exercise boundary is requested for a non-monotone payoff."""


class StencilError(CrossHedgeError):
    """Raised when a finite-difference stencil would leave the domain."""


class ConfigError(CrossHedgeError):
    """Raised for invalid or unknown run-configuration entries."""


class InconclusiveError(CrossHedgeError):
    """Raised when a statistical check yields a confidence interval too wide
    to support a conclusion."""
