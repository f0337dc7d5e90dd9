"""Exception hierarchy shared by every module."""


class SpikedLangevinError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(SpikedLangevinError, ValueError):
    pass


class DomainError(SpikedLangevinError, ValueError):
    """Argument falls inside the support of a measure (or similar)."""


class OverflowGuardError(SpikedLangevinError, OverflowError):
    """Exponent would exceed the double-precision budget."""


class CapacityError(SpikedLangevinError):
    pass


class GridMismatch(SpikedLangevinError, ValueError):
    pass


class ConvergenceError(SpikedLangevinError):
    """Iteration did not reach its tolerance.

    ``residual`` carries the last measured residual (may be None).
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PositivityError(SpikedLangevinError, ArithmeticError):
    pass


class SimulationBlowUp(SpikedLangevinError):
    """Trajectory diverged; usually dt is too large."""

    def __init__(self, message, step=None, replica=None):
        super().__init__(message)
        self.step = step
        self.replica = replica


class RegimeError(SpikedLangevinError, ValueError):
    pass


class CriticalPointError(SpikedLangevinError, ValueError):
    """Quantity is not defined on a phase boundary."""


class ConsistencyError(SpikedLangevinError):
    """Two independent evaluations of the same quantity disagree."""


class ConfigError(InvalidParameter):
    """Malformed run configuration; the message names the offending field."""
