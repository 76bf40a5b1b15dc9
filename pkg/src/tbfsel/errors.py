"""Exception hierarchy.

Every package error derives from :class:`TbfselError`; the ``exit_code``
attribute drives the process status of the command line interface
(2 = configuration, 3 = data, 4 = numerics).
"""


class TbfselError(Exception):
    exit_code = 1


class ConfigError(TbfselError):
    """Invalid run configuration or unsupported option."""

    exit_code = 2


class DataError(TbfselError):
    """Input data violates a contract (schema, degeneracy, ...)."""

    exit_code = 3


class NumericError(TbfselError):
    """A numerical procedure failed."""

    exit_code = 4


class SchemaError(DataError):
    """Malformed input file or column layout."""


class DegenerateInterceptError(DataError):
    """Intercept MLE does not exist (e.g. all-0 or all-1 binary response)."""


class NoEventsError(DataError):
    """Survival data without any uncensored observation."""


class ZeroVarianceError(DataError):
    """A design column is constant after weighted centering."""


class UndefinedMetricError(DataError):
    """A score is undefined for the given data (e.g. single-class AUC)."""


class SingularDesignError(NumericError):
    """Design matrix is rank deficient."""


class NonConvergenceError(NumericError):
    """Iterative fit did not converge; carries the last iterate."""

    def __init__(self, message, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit


class IntegrationError(NumericError):
    """Numerical quadrature failed its self-consistency check."""
