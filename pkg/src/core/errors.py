"""Exception hierarchy shared by all core modules."""


class PushFilterError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PushFilterError, ValueError):
    """Invalid numerical input (non-finite values, empty clouds, bad sizes)."""


class TaperError(DomainError):
    """The taper factor f(y) is not positive at a queried point."""


class StructuralError(PushFilterError):
    """An interaction graph does not have the expected structure."""


class GraspError(PushFilterError):
    """No graspable edge was found; callers fall back to pushing."""


class ConfigError(PushFilterError):
    """Invalid or missing configuration, object or checkpoint file."""
