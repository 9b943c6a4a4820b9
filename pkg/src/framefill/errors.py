"""Exception types shared across the package."""


class FramefillError(Exception):
    """Base class for package-specific failures."""


class InputDataError(FramefillError):
    """Input files or directories are missing, unreadable, or inconsistent."""


class ConfigError(FramefillError):
    """Command line arguments or config file are invalid."""


class NumericFailure(FramefillError):
    """A numeric computation left its valid domain."""


class AlignmentFailure(NumericFailure):
    """Alignment could not produce a trustworthy transform."""
