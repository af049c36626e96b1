"""Exception hierarchy shared by the simulation, controller and CLI layers."""


class IADPError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(IADPError):
    """A configuration or parameter guideline check failed."""

    exit_code = 2


class ConfigError(ValidationError):
    """Malformed configuration, unknown key or bad override."""


class GuidelineViolation(ValidationError):
    """A gain/parameter selection rule is violated."""


class DivergenceError(IADPError):
    """Runtime failure of the closed loop. Carries the tick and a state dump."""

    exit_code = 3

    def __init__(self, message, tick=None, dump=None):
        super().__init__(message)
        self.tick = tick
        self.dump = dump or {}

    def __str__(self):
        msg = super().__str__()
        if self.tick is not None:
            msg = f"{msg} (tick {self.tick})"
        return msg


class SingularPlantError(DivergenceError):
    pass


class IntegrationBlowupError(DivergenceError):
    pass


class LearnerDivergenceError(DivergenceError):
    pass


class NonFiniteMeasurementError(DivergenceError):
    pass


class PenaltyDomainError(ValueError, IADPError):
    """Input penalty evaluated outside the open interval (-beta, beta)."""


class IKRangeError(ValueError, IADPError):
    """Inverse kinematics target is outside the reachable annulus."""


class TraceParseError(IADPError):
    """A trace file is missing columns or is otherwise malformed."""

    exit_code = 2
