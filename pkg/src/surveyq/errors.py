"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
data problems exit 2, training divergence exits 3.
"""


class SurveyQError(Exception):
    """Base class for all package-specific errors."""


class DataError(SurveyQError):
    """Bad input data: missing files, malformed rows, invalid schemas."""


class InvalidTableError(DataError):
    """Contingency table with a zero row or column total (or negative counts)."""


class UnbalancedSourceError(DataError):
    """Balanced sampling requested from a dataset missing a class."""


class EncodingError(DataError):
    """Answer code outside its feature's category range."""


class WeightFormatError(SurveyQError):
    """Weight/model file is corrupt, truncated, or shaped differently than requested."""


class DivergenceError(SurveyQError):
    """Training produced a non-finite loss or gradient."""


class ContractViolation(SurveyQError):
    """An API was driven outside its contract (e.g. stepping a finished episode)."""
