"""Exception types shared across modules."""


class DimensionMismatch(ValueError):
    """Array shapes do not agree with the declared contract."""


class IndexOutOfRange(IndexError):
    """A node or time index falls outside the valid range."""


class BadDimension(ValueError):
    """A requested dimension (input width, hidden size, ...) is invalid."""


class DivergenceDetected(RuntimeError):
    """The objective or the parameters became non-finite during a fit."""


class NotConverged(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class InsufficientData(ValueError):
    """Too few observations for the requested estimate."""


class NotPositiveDefinite(ValueError):
    """A matrix required to be positive definite is not."""


class NotCorrelation(ValueError):
    """A matrix is not a valid correlation matrix."""


class ConfigError(ValueError):
    """A configuration value violates its invariants."""
