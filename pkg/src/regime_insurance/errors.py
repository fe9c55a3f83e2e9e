"""Exception types raised across the package."""


class InvalidModelError(ValueError):
    """Regime model parameters violate their invariants."""


class NoStationaryDistributionError(ValueError):
    """The generator has no unique stationary distribution."""


class NumericFailureError(ArithmeticError):
    """A numerical routine produced non-finite or inconsistent output."""


class GridTooNarrowError(NumericFailureError):
    """Inverted density does not integrate to one on the chosen grid."""


class InsufficientResolutionError(NumericFailureError):
    """Requested probability is not resolved by the distribution grid."""


class InfeasibleFloorError(ValueError):
    """The floor cannot be reached even by a fully riskless portfolio."""


class NoInitialCushionError(ValueError):
    """Initial cushion is not positive, so a CPPI multiple cannot be matched."""


class ConfigError(ValueError):
    """Experiment configuration failed to parse or validate."""
