"""Exception hierarchy shared across the package."""


class MixQRFError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MixQRFError, ValueError):
    """Raised when an argument violates an operation's preconditions."""


class InvalidConfigError(MixQRFError, ValueError):
    """Raised for inconsistent hyper-parameters or run configuration."""


class SingularDesignError(MixQRFError, ValueError):
    """Raised when a least-squares design matrix is rank deficient."""


class InsufficientOOBError(MixQRFError, ValueError):
    """No out-of-bag observations are available."""


class InsufficientHistoryError(MixQRFError, ValueError):
    """Not enough low-frequency lags precede the requested period."""


class InsufficientDataError(MixQRFError, ValueError):
    """Nothing is left after trimming rows without the required history."""


class NumericalDegeneracyError(MixQRFError, FloatingPointError):
    """Raised when a likelihood computation underflows for every component."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (EM iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class DataFormatError(MixQRFError, ValueError):
    """Malformed input file; message names the offending row and column."""
