"""Exception types shared across the package."""


class KelvinError(Exception):
    """Base class for all package-specific errors."""


class NonUniqueFixedPoint(KelvinError):
    """A cycle map has a degenerate unit eigenvalue; no unique steady state.

    Carries the dimension of the (numerically) degenerate eigenspace.
    """

    def __init__(self, eigenspace_dim: int, message: str | None = None):
        self.eigenspace_dim = eigenspace_dim
        super().__init__(message or f"unit eigenvalue degenerate (eigenspace dim {eigenspace_dim})")


class ResonantDenominator(KelvinError):
    """Closed-form expression hit a resonant denominator; use the exact engine."""


class DegenerateBand(KelvinError):
    """Band edges coincide (theta = 0 or pi/2 exactly); continuum formulas undefined."""


class UndefinedSteadyState(KelvinError):
    """All rates or overlaps vanish; the steady-state ratio is undefined."""


class NoConvergenceRate(KelvinError):
    """Requested cycle estimates with a non-positive convergence rate."""


class UnsupportedCombination(KelvinError):
    """Engine does not support the requested noise kind or schedule."""


class OptimizationFailed(KelvinError):
    """Every restart of the optimizer failed to produce a finite objective."""


class FitQualityError(KelvinError):
    """Exponential fit of a decay trace rejected; carries residual diagnostics."""

    def __init__(self, residual: float, message: str | None = None):
        self.residual = residual
        super().__init__(message or f"decay fit rejected (residual {residual:.3e})")


class ConfigError(KelvinError):
    """Invalid experiment configuration."""
