"""Exception hierarchy."""


class GeowienerError(Exception):
    """Base class for all library errors."""


class DomainError(GeowienerError, ValueError):
    """Input outside the domain of an operation (non-tangent vector, bad norm, ...)."""


class CutLocusError(DomainError):
    """Two points are at or beyond the injectivity radius of each other."""


class DevelopmentRangeError(DomainError):
    """A driving increment is too long to be inverted by anti-development."""


class PartitionError(DomainError):
    """Invalid partition of [0, 1]."""


class ConfigError(GeowienerError, ValueError):
    """Invalid experiment or grid configuration."""


class CapabilityError(GeowienerError, NotImplementedError):
    """The requested operation is not supported for this manifold."""


class BudgetExceeded(GeowienerError, RuntimeError):
    """Projected or elapsed runtime exceeds the configured wall-clock cap."""
