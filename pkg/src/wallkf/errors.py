"""Exception types shared across the package."""


class WallkfError(Exception):
    """Base class for package-specific errors."""


class ConfigError(WallkfError):
    """Invalid run configuration, prior specification, or model setup."""


class DataError(WallkfError):
    """Malformed measurement data: bad schema, broken cadence, parse failure."""


class DimensionError(WallkfError):
    """Operands with mutually inconsistent shapes."""


class NumericalError(WallkfError):
    """Numerical failure, e.g. a singular innovation covariance."""
