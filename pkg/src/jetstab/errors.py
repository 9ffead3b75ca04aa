"""Exception hierarchy shared by all modules."""


class JetError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(JetError, ValueError):
    """Invalid configuration or mismatched inputs."""


class NumericError(JetError, ArithmeticError):
    """A numerical routine produced non-finite values or failed to solve."""


class DomainError(JetError, ValueError):
    """The jet radius approaches zero (pinch-off) or an argument leaves the valid domain."""


class ConvergenceError(NumericError):
    """An iterative method did not converge.

    Attributes
    ----------
    residual : float
        Last residual reached before giving up.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SizeError(ConvergenceError):
    """A fixed-point map failed to contract because the input is too large."""
