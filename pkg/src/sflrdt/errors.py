"""Exception types shared across the package."""


class SflrdtError(Exception):
    """Base class for all package errors."""


class ArgumentError(SflrdtError, ValueError):
    """Invalid argument value (e.g. a quadrature order below one)."""


class DomainError(SflrdtError, ValueError):
    """Parameters fall outside the region where the functional is finite.

    ``index`` is the 1-based level k of the offending Theta_k when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class QuadratureError(SflrdtError, RuntimeError):
    """Adaptive quadrature hit ``max_order`` before meeting its target."""


class ConvergenceError(SflrdtError, RuntimeError):
    """No restart of the stationarity solver reached the tolerance.

    The best point found is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CapError(SflrdtError, ValueError):
    """Exhaustive enumeration requested beyond the hard size cap."""


class ParseError(SflrdtError, ValueError):
    """Malformed parameter file."""
