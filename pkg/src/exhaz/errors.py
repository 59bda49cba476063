"""Exception hierarchy shared across the package."""


class ExhazError(Exception):
    """Base class for all package-specific errors."""


class LifeTableError(ExhazError):
    """Base class for life-table loading and query errors."""


class MalformedRow(LifeTableError):
    """A life-table row could not be parsed (wrong field count or type)."""


class DuplicateCell(LifeTableError):
    """The same (age, year, strata) cell appears more than once."""


class MissingCell(LifeTableError):
    """A cell inside the inferred age/year range has no rate."""


class NegativeRate(LifeTableError):
    """A mortality rate is negative or non-finite."""


class UnknownStratum(LifeTableError):
    """A queried strata value does not exist in the table."""


class ZeroHazardPath(LifeTableError):
    """Inverse lookup impossible: zero hazard everywhere on the path."""


class NumericalOverflow(ExhazError):
    """A survival tail underflowed beyond what stable forms can represent."""


class NonFiniteLikelihood(ExhazError):
    """A per-patient likelihood term evaluated to NaN or infinity."""

    def __init__(self, message, patient_index=None):
        super().__init__(message)
        self.patient_index = patient_index


class NonPositive(ExhazError):
    """A parameter that must be strictly positive is not."""


class SingularHessian(ExhazError):
    """The observed information matrix is not positive definite."""


class SEsUnavailable(ExhazError):
    """Standard errors were requested but could not be computed."""


class NoEligibleFit(ExhazError):
    """Model selection received no converged candidate fits."""


class TargetUnreachable(ExhazError):
    """The requested censoring proportion cannot be achieved."""


class ConfigError(ExhazError):
    """A run configuration file is missing, malformed, or inconsistent."""


class DataError(ExhazError):
    """An input data file (cohort or life table) failed validation."""
