"""Exception hierarchy shared by every module of the engine."""


class NHError(Exception):
    """Base class for all engine errors."""


class NumericalError(NHError):
    """A numerical operation could not produce a trustworthy result."""


class SingularFrame(NumericalError):
    """The n x n block of the frame coefficients is (numerically) singular."""


class FrameInconsistency(NHError):
    """Frame data violates its contract (pinned entries, supplied structure)."""


class NewtonDivergence(NumericalError):
    """Legendre inversion failed to converge."""


class SingularMass(NumericalError):
    """The assembled left-hand matrix of the equations of motion is singular."""


class MissingCurvature(NHError):
    """Second partials of the constraint map are not computable."""


class MaxStepsExceeded(NumericalError):
    """The integrator hit ``max_steps`` before reaching the final time."""


class RhsFailure(NumericalError):
    """The right-hand side raised during integration.

    ``time`` is the stage time at which the failure happened and ``cause`` the
    original exception.
    """

    def __init__(self, time, cause):
        self.time = float(time)
        self.cause = cause
        super().__init__(f"right-hand side failed at t={self.time:.17g}: "
                         f"{type(cause).__name__}: {cause}")


class NonSimultaneousSlice(NHError):
    """A linear-integral evaluation was requested on a loop with varying time."""


class UnknownModel(NHError, KeyError):
    """Requested model name is not in the registry."""

    def __str__(self):
        return Exception.__str__(self)


class InvalidParameter(NHError, ValueError):
    """A model parameter is outside its admissible range."""


class OracleUnavailable(NHError):
    """No reference solution exists for the requested model."""


class ConfigError(NHError, ValueError):
    """Scenario configuration failed validation."""
