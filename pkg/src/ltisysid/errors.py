"""Exception hierarchy shared by all modules."""


class LtiError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(LtiError, ValueError):
    """Array shapes are inconsistent with each other."""


class NumericError(LtiError, ArithmeticError):
    """A numerical routine produced or received non-finite values.

    Attributes
    ----------
    residual : float or None
        Residual of the failed computation, when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContractError(LtiError, ValueError):
    """A documented precondition does not hold."""


class DataError(LtiError, ValueError):
    """Trajectory data cannot support the requested operation."""


class PredictionOverflow(NumericError):
    """Model predictions left the representable range.

    Raised when ``|C e^{At} s|`` exceeds the overflow threshold (or is not
    finite) for trajectory ``k`` at time ``t``.
    """

    def __init__(self, k, t, value=None):
        super().__init__(f"prediction overflow in trajectory {k} at t={t}")
        self.k = k
        self.t = t
        self.value = value
