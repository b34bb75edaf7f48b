"""Exception hierarchy shared by the simulation modules."""


class TwoModeError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(TwoModeError, ValueError):
    pass


class UnknownModeError(TwoModeError, KeyError):
    pass


class SpaceMismatchError(TwoModeError, ValueError):
    pass


class ParameterError(TwoModeError, ValueError):
    pass


class WeakDriveError(ParameterError):
    """Drive amplitude exceeds the weak-drive guard."""


class DegenerateSteadyStateError(TwoModeError):
    pass


class SolverError(TwoModeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UndefinedCorrelationError(TwoModeError, ArithmeticError):
    pass


class NoDetectionError(TwoModeError):
    """Jump operator annihilates the state (zero detection probability)."""


class IntegrationError(TwoModeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CutoffError(TwoModeError):
    """Thermal phonon cutoff leaves too much weight outside the sum."""
