"""Exception hierarchy shared by every module of the package."""


class PCLIndexError(Exception):
    """Base class for package errors."""


class DomainError(PCLIndexError, ValueError):
    """A state, threshold or resource level lies outside its admissible range."""


class ModelSpecError(PCLIndexError, ValueError):
    """A model, policy or initial distribution was constructed inconsistently."""


class ResourceCapError(PCLIndexError, RuntimeError):
    """A computation would exceed a configured size cap."""

    def __init__(self, message, cap):
        super().__init__(message)
        self.cap = cap


class CertificationError(PCLIndexError, ArithmeticError):
    """The certified lower bound on the marginal resource metric is not positive.

    Carries the offending state, the computed ``g_k`` and the error bound so
    callers can report a witness.
    """

    def __init__(self, message, x, g, bound):
        super().__init__(message)
        self.x = x
        self.g = g
        self.bound = bound


class UncertifiedInputError(PCLIndexError, ValueError):
    """An index table or project lacks the certificate an operation relies on."""


class UnsupportedModelError(PCLIndexError, TypeError):
    """No verification strategy applies to the supplied model."""


class InfeasibleBudgetError(PCLIndexError, ValueError):
    """The budget cannot even cover the all-passive joint action."""


class NumericError(PCLIndexError, ArithmeticError):
    """A numerical procedure failed its own consistency check."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class BudgetViolationError(PCLIndexError, AssertionError):
    """A simulated joint action exceeded the per-period budget (always a bug)."""
