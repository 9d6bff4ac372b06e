"""Exception hierarchy shared by all solver layers."""


class PerifsiError(Exception):
    """Base class for every error raised by the package."""


class AdmissibilityError(PerifsiError):
    """A displacement reached the sup-norm bound kappa."""


class SelfIntersectionError(AdmissibilityError):
    """An outer-coupling iterate left the admissible set ||delta||_inf < kappa."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ResolutionError(PerifsiError):
    """Sampling too coarse for the requested mollifier radius."""


class DegenerateBasisError(PerifsiError):
    """Gram-Schmidt produced a (numerically) null vector."""


class PreconditionError(PerifsiError, ValueError):
    """Input violates a documented precondition."""


class SolverError(PerifsiError):
    """A linear solve failed where it should never fail."""


class QuadratureError(PerifsiError):
    """Non-finite value met during quadrature."""


class SingularSystemError(PerifsiError):
    """Time-step system matrix is singular."""


class BlowupError(PerifsiError):
    """State norm exceeded the blowup threshold."""


class NearResonanceError(PerifsiError):
    """(I - A) is numerically singular."""


class NonconvergenceError(PerifsiError):
    """Iteration did not reach its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ConfigError(PerifsiError):
    """Malformed configuration file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
