"""Exception types.

Two families matter for the CLI exit-code contract: ConfigError maps to
exit code 2, NumericalError (and subclasses) to exit code 3. I/O problems
are left to the builtin OSError family (exit code 4).
"""


class ConfigError(Exception):
    """Invalid or unparseable run configuration. `path` is the offending key path."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericalError(Exception):
    """Base class for numeric/algorithmic failures."""


class SingularPointError(NumericalError):
    """Field evaluation requested on (or too close to) a conductor filament."""


class DerivativeConvergenceError(NumericalError):
    """Finite-difference derivative did not converge under step halving."""


class NoPeakError(NumericalError):
    """No spectral peak above the noise floor inside the fit window."""


class FitConvergenceError(NumericalError):
    """Nonlinear least squares failed to converge."""


class NonDecayingError(NumericalError):
    """Ringdown fit found no decay (tau much longer than the trace)."""


class TooShortTraceError(NumericalError):
    """Trace too short for the requested spectral estimate."""


class InsufficientPointsError(NumericalError):
    """Too few successful sweep points inside the scaling-fit range."""


class EscapeError(NumericalError):
    """Magnet left the trapping region during a simulation."""

    def __init__(self, message, escape_time, trajectory=None):
        super().__init__(message)
        self.escape_time = escape_time
        self.trajectory = trajectory


class NonFiniteStateError(NumericalError):
    """Integrator state became non-finite."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
