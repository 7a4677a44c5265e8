"""Exception and warning types raised by the solvers and the CLI."""


class OptosyncError(Exception):
    """Base class for all package errors."""


class ConfigError(OptosyncError, ValueError):
    """Malformed configuration, parameter set, or scenario."""


class NoConvergence(OptosyncError):
    """The mean-field fixed-point iteration did not settle on one branch."""


class Unstable(OptosyncError):
    """The linearized drift matrix has an eigenvalue with positive real part."""


class StepFailure(OptosyncError):
    """An adaptive integrator could not make progress (step-size underflow)."""


class UnphysicalState(OptosyncError):
    """A covariance matrix violated the uncertainty principle."""


class NumericalDegeneracy(OptosyncError):
    """Eigenvalues that should come in +/- pairs did not pair up."""


class DimensionMismatch(OptosyncError, ValueError):
    """Operator and state dimensions are incompatible."""


class PlotError(OptosyncError, OSError):
    """A plot could not be written (bad table or unwritable path)."""


class TruncationLeak(UserWarning):
    """Population reached the top Fock level of a truncated mode.

    Emitted as a warning; results after ``time`` should not be trusted.
    """

    def __init__(self, message, time=None, populations=None):
        super().__init__(message)
        self.time = time
        self.populations = populations
