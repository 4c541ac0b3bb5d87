"""Exception types shared across the package."""


class GradShapeError(ValueError):
    """Base class for all gradshape errors."""


class NonFinite(GradShapeError):
    """Input contains NaN or Inf."""


class NotPD(GradShapeError):
    """Matrix is not strictly positive definite."""


class NotPSD(GradShapeError):
    """Matrix is not positive semidefinite at the required tolerance."""


class IndexOutOfRange(GradShapeError):
    """Plane-rotation indices outside 0 <= i < j < d."""


class BadDimension(GradShapeError):
    """Dimension or query count outside the supported range."""


class ZeroGradient(GradShapeError):
    """Operation requires a nonzero gradient."""


class NonFiniteFunctionValue(GradShapeError):
    """Objective returned NaN or Inf at a query point."""


class DimensionMismatch(GradShapeError):
    """Vector or matrix shapes are inconsistent."""


class NonPositiveDirectionalCurvature(GradShapeError):
    """Directional curvature must be positive for a relative reduction."""


class BadProbability(GradShapeError):
    """Probability parameter outside (0, 1)."""


class DegenerateDimension(GradShapeError):
    """Dimension too small for the requested ratio."""


class BadAlpha(GradShapeError):
    """Alignment parameter outside [0, 1]."""


class PartitionMismatch(GradShapeError):
    """Vector length does not match the block partition."""


class MissingCrossBlocks(GradShapeError):
    """Cross-block curvature required but absent from the view."""


class NotPDWithDamping(GradShapeError):
    """Damped block curvature is not strictly positive definite."""


class TooFewTrials(GradShapeError):
    """Not enough trials for an empirical decomposition."""


class DegenerateSpectrum(GradShapeError):
    """Spectrum has no top/bottom separation to sweep."""


class EmptyStream(GradShapeError):
    """Task stream must contain at least one task."""


class NoFeasibleC(GradShapeError):
    """No constant in the search grid reaches the target coverage."""


class ConfigError(GradShapeError):
    """Scenario or run configuration is invalid."""
