"""Exception types raised by odefit."""


class OdefitError(Exception):
    """Base class for all package errors."""


class ConfigError(OdefitError, ValueError):
    """Invalid or unknown configuration content."""


class DegenerateDataError(OdefitError, ValueError):
    """Input data carries no information for the requested fit."""


class ConvergenceError(OdefitError, RuntimeError):
    """An iterative or adaptive routine exhausted its budget."""


class IntegrationError(OdefitError, RuntimeError):
    """The ODE integrator failed before reaching the final time.

    Attributes
    ----------
    last_time : float
        Last time successfully reached.
    partial : ndarray
        Output rows computed before the failure (may be empty).
    """

    def __init__(self, message, last_time=float("nan"), partial=None):
        super().__init__(message)
        self.last_time = last_time
        self.partial = partial
