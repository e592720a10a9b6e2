"""Exception hierarchy shared across the package."""


class SimcalError(Exception):
    """Base class for all package errors."""


class RangeError(SimcalError, ValueError):
    """A physical value falls outside its parameter range."""


class ShapeError(SimcalError, ValueError):
    """Array or sequence dimensions do not agree."""


class CatalogError(SimcalError, KeyError):
    """Unknown environment identifier."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NumericError(SimcalError, ArithmeticError):
    """Non-finite value encountered where a finite one is required."""


class ConditioningError(NumericError):
    """A kernel matrix could not be factorized even after jitter."""


class EmptyInputError(SimcalError, ValueError):
    """An operation received an empty collection."""


class DomainError(SimcalError, ValueError):
    """A distribution parameter lies outside its valid domain."""


class DependencyError(SimcalError, RuntimeError):
    """A required upstream artifact (policy checkpoint, calibration result) is missing."""


class CoverageError(SimcalError, ValueError):
    """Reports being combined do not cover the same environments."""


class ConfigError(SimcalError, ValueError):
    """Invalid or unknown configuration entry."""


class BudgetExceeded(SimcalError, RuntimeError):
    """A calibration run tried to exceed its rollout budget."""
