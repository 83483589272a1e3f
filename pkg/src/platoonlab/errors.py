"""Exception types shared across the toolkit."""


class PlatoonError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PlatoonError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(PlatoonError, ValueError):
    """A formula was evaluated outside its domain of definition."""


class CollisionError(DomainError):
    """A follower reached a non-positive front-to-front gap."""

    def __init__(self, gap, message=None):
        self.gap = gap
        super().__init__(message or f"collision: gap {gap!r} <= 0")


class SingularityError(DomainError):
    """A transfer function or forced response hit a pole."""


class UndefinedRatioError(PlatoonError, ValueError):
    """An amplification ratio was requested for a non-oscillating leader."""


class EmptyWindowError(PlatoonError, ValueError):
    """A statistic was requested over an empty sample window."""
