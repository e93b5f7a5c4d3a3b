class AdaptConfError(Exception):
    """Base class for all package errors."""


class ConfigError(AdaptConfError, ValueError):
    """A configuration value violates its constraint.

    ``field`` names the offending key (dotted for nested config) so callers
    can report it without parsing the message.
    """

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class RejectedSampleError(AdaptConfError, ValueError):
    """A counter sample is inconsistent with its predecessor."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"rejected sample ({field}): {message}")


class ReplayError(AdaptConfError):
    """A telemetry trace cannot be replayed."""
