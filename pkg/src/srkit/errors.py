"""Exception types shared across the toolkit."""


class SrkitError(Exception):
    """Base class for all srkit errors."""


class DimensionError(SrkitError):
    """Tensor shapes are inconsistent; the message names the offending axis."""


class NumericError(SrkitError):
    """Non-finite values where finite ones are required."""


class ConfigError(SrkitError):
    """Invalid or unknown configuration value; the message names the key."""


class UsageError(SrkitError):
    """API misuse, e.g. backward called with a stale or eval-mode cache."""


class CheckpointError(SrkitError):
    """Malformed checkpoint file (bad magic, version, or truncation)."""
