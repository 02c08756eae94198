"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: ConfigError and DatasetFormatError are
usage/configuration problems (exit 2), OracleTransportError is an
infrastructure failure (exit 3), partial per-row failures surface as exit 1.
"""


class ContamkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ContamkitError):
    """Invalid parameter or configuration value."""


class DatasetFormatError(ContamkitError):
    """A dataset file could not be read; message carries the line number."""


class ModelFormatError(ContamkitError):
    """A model file is corrupt, truncated, or has an unsupported version."""


class OracleError(ContamkitError):
    """Base class for oracle failures.

    May carry partial per-permutation scores gathered before the failure so
    callers can persist them (``partial_scores``).
    """

    def __init__(self, message, partial_scores=None):
        super().__init__(message)
        self.partial_scores = partial_scores


class OracleTransportError(OracleError):
    """Retryable transport-level failure (process died, socket closed, timeout)."""


class OracleSemanticError(OracleError):
    """The oracle answered with an error for a well-formed request."""


class AggregationError(ContamkitError):
    """Fisher aggregation could not run (empty input, everything excluded)."""
