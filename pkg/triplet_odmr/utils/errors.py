"""
Exception types shared by the toolkit.

The command-line frontend maps these onto exit codes: configuration problems
exit with 2, numerical failures with 3.
"""

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


class OdmrError(Exception):
    """Base class for every error raised on purpose by the toolkit."""

    exit_code = 1


class ConfigError(OdmrError):
    """Invalid, missing or unreadable configuration / input files."""

    exit_code = EXIT_CONFIG_ERROR


class InvalidInputError(OdmrError, ValueError):
    """A value that violates a domain invariant (reported as a config error)."""

    exit_code = EXIT_CONFIG_ERROR


class NumericalError(OdmrError):
    """A computation that could not produce a trustworthy number."""

    exit_code = EXIT_NUMERICAL_ERROR


class KineticsError(NumericalError):
    """Population propagation broke conservation or positivity."""


class FitError(NumericalError):
    """Global fit could not be set up or evaluated."""


class EchoAnalysisError(NumericalError):
    """Hahn-echo envelope fit or spectrum could not be computed."""
