"""Exception types raised across the package."""


class AttritionError(ValueError):
    """Base class for every error raised by this package."""


class DataError(AttritionError):
    """Input data is malformed, inconsistent or describes a degenerate design."""


class ConfigError(AttritionError):
    """A combination of options or inputs does not fit together."""


class CapacityError(AttritionError):
    """An exact computation was requested beyond its size limit."""


class UnsupportedError(AttritionError):
    """The requested operation is not defined for this mechanism or statistic."""
