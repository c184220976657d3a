"""Exception hierarchy shared by all modules."""


class EBTError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(EBTError, ValueError):
    pass


class InputError(EBTError, ValueError):
    pass


class SupportViolationError(InputError):
    """Initial density has mass outside the cohort mesh."""


class DimensionError(EBTError, ValueError):
    pass


class EvaluationError(EBTError, ArithmeticError):
    """A coefficient function returned a non-finite value."""


class NumericalBlowupError(EBTError, ArithmeticError):
    """Non-finite derivative; ``index`` names the offending cohort."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StepSizeError(EBTError, RuntimeError):
    pass


class PresetLookupError(EBTError, KeyError):
    pass


class SolverError(EBTError, RuntimeError):
    """LP solver failure; cannot happen for valid inputs."""
