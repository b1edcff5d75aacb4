"""Exception hierarchy shared by all sindycp modules."""

import numpy as np


class SindyCPError(Exception):
    """Base class for every error raised by this package."""


class RegistryError(SindyCPError, KeyError):
    """Unknown system name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ArityError(SindyCPError, ValueError):
    """Wrong number of system parameters."""


class ParameterError(SindyCPError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DataError(SindyCPError, ValueError):
    """Input data are malformed (non-finite entries, bad shapes)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InsufficientDataError(SindyCPError, ValueError):
    """Not enough samples for the requested operation."""


class IntegrationError(SindyCPError, FloatingPointError):
    """A Runge-Kutta stage produced non-finite values."""

    def __init__(self, message, stage=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.step = step


class DivergenceError(SindyCPError, FloatingPointError):
    """A trajectory left the admissible state box."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegeneracyError(SindyCPError, np.linalg.LinAlgError):
    """Singular KKT system in a constrained least-squares solve."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class CalibrationError(SindyCPError, ValueError):
    """Too few non-conformity scores to calibrate an interval."""


class ConfigError(SindyCPError, ValueError):
    """Scenario configuration could not be parsed or validated."""
