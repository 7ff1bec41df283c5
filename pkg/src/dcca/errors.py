"""Exception hierarchy shared by every module."""


class DccaError(Exception):
    """Base class for all errors raised by :mod:`dcca`."""


class GeometryError(DccaError, ValueError):
    """Box geometry is invalid or does not fit the series."""


class EmptyInput(DccaError, ValueError):
    pass


class UnsupportedOrder(DccaError, ValueError):
    """A closed form was requested for a detrending order it does not cover."""


class DegenerateVariance(DccaError, ArithmeticError):
    """A detrended variance is zero, so a correlation is undefined."""


class LagUnavailable(DccaError, LookupError):
    """The covariance model cannot supply a lag that is required."""


class SizeCap(DccaError, MemoryError):
    """A dense computation would exceed the configured size cap."""


class NonSummable(DccaError, ValueError):
    """Covariances do not look absolutely summable over the available lags."""


class InvalidParameter(DccaError, ValueError):
    pass


class DataError(DccaError, ValueError):
    """Malformed or unusable input data (CLI exit code 1)."""


class ParseError(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class EmptyIntersection(DataError):
    pass


class DuplicateDate(DataError):
    pass
