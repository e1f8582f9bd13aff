"""Exception hierarchy shared by every module.

Each exception carries the CLI exit code it maps to, so the command-line
front end never has to guess.
"""


class SBLError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2
    kind = "error"


class DomainError(SBLError, ValueError):
    """A parameter lies outside the domain of the operation."""

    kind = "domain"


class SingularityError(DomainError):
    """The weight formula is singular at the requested photon number."""

    kind = "singularity"


class NormalizationError(SBLError, ValueError):
    """A distribution cannot be normalized under the requested policy."""

    kind = "normalization"


class ConfigError(SBLError, ValueError):
    """An experiment or sweep configuration failed validation."""

    kind = "config"


class DegenerateDataError(SBLError, ValueError):
    """The data carry no information for the requested estimate."""

    exit_code = 4
    kind = "degenerate"


class CorruptFileError(SBLError, OSError):
    """A tag or table file is malformed."""

    exit_code = 3
    kind = "corrupt"


class UndefinedRatioError(DomainError):
    """A ratio of probabilities involves an exact zero."""

    kind = "undefined_ratio"
