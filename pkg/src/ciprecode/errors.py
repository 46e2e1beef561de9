"""Exception hierarchy shared by all modules."""


class CiPrecodeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CiPrecodeError, ValueError):
    """Invalid configuration value (modulation order, dimensions, SNR grid...)."""


class ChannelFileError(CiPrecodeError, ValueError):
    """Malformed channel dump file."""

    def __init__(self, message, line=None, field=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if field is not None:
                loc += f", field {field}"
            loc += ": "
        super().__init__(loc + message)
        self.line = line
        self.field = field


class NumericalError(CiPrecodeError, ArithmeticError):
    """Base class for numerical failures inside the precoding pipeline."""


class NoNullSpace(NumericalError):
    """The consistency operator has a trivial null space; no nonzero
    pre-scaling vector exists."""


class DegeneratePowerForm(NumericalError):
    """The reduced power form is numerically zero."""


class DegenerateDual(NumericalError):
    """The dual QP value is numerically zero, so the power multiplier is undefined."""


class NonConvergence(NumericalError):
    """An iterative solver stopped before meeting its tolerance.

    ``best`` carries the best iterate found and ``residual`` its optimality residual.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class Infeasible(CiPrecodeError):
    """The constructive-interference constraint set is empty."""
