"""Exception types shared across the package."""


class TeamselError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TeamselError):
    """Invalid parameters, malformed files, or inconsistent configuration."""


class InsufficientData(TeamselError):
    """An operation received fewer samples than it needs."""


class SupportViolation(TeamselError):
    """A known behavior policy assigned probability zero to an observed action.

    Behavior policies are logged alongside the data, so this indicates
    corrupted or mismatched inputs rather than an estimation failure.
    """


class TypeInferenceFailure(TeamselError):
    """No policy in the type library supports the observed teammate actions."""
