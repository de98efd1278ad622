"""Error taxonomy shared by all modules, mapped to CLI exit codes."""


class GlabError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidArgumentError(GlabError, ValueError):
    """A function precondition was violated by the caller."""

    exit_code = 2


class ConfigError(GlabError):
    """Configuration file is missing keys, has unknown keys, or bad values.

    `violations` lists every problem found, not just the first.
    """

    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(GlabError):
    """A required file is missing or unreadable/unwritable."""

    exit_code = 3


class NumericError(GlabError):
    """A computation produced non-finite values."""

    exit_code = 4


class CapacityError(GlabError):
    """A generator could not satisfy its constraints (e.g. canvas too small)."""

    exit_code = 5
