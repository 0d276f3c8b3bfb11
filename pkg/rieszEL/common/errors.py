"""Exception hierarchy shared by every rieszEL module.

Each class carries the process exit code the command line reports for it, so
library code raises and only ``rieszEL.cli`` turns errors into exit codes.
"""


class RieszError(Exception):
    """Base class of all rieszEL errors.

    Attributes:
        exit_code (int): Exit code reported by the command line
    """
    exit_code = 2


class DomainError(RieszError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(RieszError, ValueError):
    """Invalid kernel parameters or solver configuration."""


class PreconditionError(RieszError):
    """A stated hypothesis of an operation does not hold for its input."""


class NotCriticalError(PreconditionError):
    """The density does not have a constant potential on its support."""
    exit_code = 1


class ResolutionError(RieszError):
    """The grid is too coarse for the requested window, mollifier or ladder.

    Args:
        message (str): Human readable description
        condition (str): Name of the condition that could not be met
    """
    def __init__(self, message: str, condition: str = None) -> None:
        super().__init__(message)
        self.condition = condition


class OscillatoryRatioError(RieszError):
    """The singularity ratio sequence is bounded but does not converge.

    Args:
        message (str): Human readable description
        running_min (float): Running minimum of the tail ratios
    """
    exit_code = 1

    def __init__(self, message: str, running_min: float) -> None:
        super().__init__(message)
        self.running_min = running_min


class DivergenceError(RieszError):
    """Energy increased across too many consecutive solver steps."""
    exit_code = 1


class BoundViolation(RieszError):
    """A verified inequality failed on the given input."""
    exit_code = 1
