"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line driver can map
failures onto distinct process exit statuses.
"""


class GBSError(Exception):
    exit_code = 1


class InvalidInputError(GBSError, ValueError):
    """Malformed or inconsistent input (shapes, symmetry, partitions)."""

    exit_code = 2


class InvalidParameterError(GBSError, ValueError):
    """A scalar parameter lies outside its documented range."""

    exit_code = 2


class InvalidStateError(InvalidInputError):
    """Q-covariance violates the physicality bound."""


class InvalidModelError(InvalidInputError):
    pass


class ValidationInputError(InvalidInputError):
    """Sample sets that cannot be compared (mode count or cutoff mismatch)."""


class ResourceLimitError(GBSError):
    exit_code = 3


class NumericalDegeneracyError(GBSError, ArithmeticError):
    exit_code = 4


class SamplingDegeneracyError(NumericalDegeneracyError):
    pass


class UndefinedRatioError(NumericalDegeneracyError):
    pass
