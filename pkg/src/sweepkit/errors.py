"""Exception types shared across the package."""


class SweepkitError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SweepkitError, ValueError):
    """A caller supplied an argument outside an operation's domain."""


class ConfigError(SweepkitError, ValueError):
    """A policy or run configuration could not be resolved."""


class FormatError(SweepkitError):
    """A file on disk does not match the expected layout."""
