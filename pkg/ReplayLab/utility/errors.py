"""Exception types raised across ReplayLab.

Every message carries the `#bugs` tag so console output reads the same way
whether it comes from a printed warning or an uncaught exception.
"""

BUG_TAG = "\033[91m#bugs\033[0m"
INFO_TAG = "\033[90m#info\033[0m"


def bug(message: str) -> str:
    """Prefix a message with the `#bugs` tag."""
    return f"{BUG_TAG} {message}"


class ReplayLabError(Exception):
    """Base class for every error raised by ReplayLab."""


class InvalidArgumentError(ReplayLabError, ValueError):
    """An argument is outside the range an operation accepts."""

    def __init__(self, message: str):
        super().__init__(bug(message))


class ConfigError(InvalidArgumentError):
    """A run-config field failed validation.

    Args:
        field (str): Slash path of the offending field, e.g. ``rsd/T_exp``.
        message (str): What is wrong with it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"Config field '{field}': {message}")


class ProtocolError(ReplayLabError, RuntimeError):
    """An experiment protocol precondition was broken (unfrozen policy, missing checkpoint, ...)."""

    def __init__(self, message: str):
        super().__init__(bug(message))


class HypothesisViolationError(ProtocolError):
    """A verification check was handed an instance that breaks its hypothesis."""
