"""Exception types raised across the package."""


class WeakspotError(Exception):
    """Base class for all errors raised by weakspot."""


class DegenerateElement(WeakspotError, ValueError):
    pass


class SingularSystem(WeakspotError):
    pass


class InvalidSensor(WeakspotError, ValueError):
    pass


class InvalidOrder(WeakspotError, ValueError):
    pass


class GridTooLarge(WeakspotError, ValueError):
    pass


class DimensionMismatch(WeakspotError, ValueError):
    pass


class AllZeroMeasurements(WeakspotError, ValueError):
    pass


class LineSearchFailed(WeakspotError):
    pass


class ToleranceExceeded(WeakspotError):
    pass


class InvalidArgument(WeakspotError, ValueError):
    pass


class ConfigError(WeakspotError, ValueError):
    pass
