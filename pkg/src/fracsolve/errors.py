"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FracSolveError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(FracSolveError, ValueError):
    """An argument lies outside the mathematical domain of a routine."""


class UnsupportedRangeError(FracSolveError):
    """The argument is valid but no evaluation branch covers it reliably."""


class NumericalInstabilityError(FracSolveError):
    """Two evaluation routes disagree beyond the accepted tolerance."""


class ConstraintViolation(FracSolveError, ValueError):
    """One or more named parameter constraints are violated.

    ``names`` lists every violated constraint, not just the first one.
    """

    def __init__(self, names: list[str], detail: str = ""):
        self.names = list(names)
        msg = ", ".join(self.names)
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class ContractionBudgetError(ConstraintViolation):
    def __init__(self, factor: float):
        self.factor = factor
        super().__init__(["contraction_budget_exceeded"], f"factor={factor:.6g}")


class AmplificationOverflowError(FracSolveError):
    """``modes`` lists the offending 1-based mode indices; ``safe_modes`` is the
    largest truncation level whose amplification stays finite."""

    def __init__(self, eigenvalue: float, horizon: float, modes=None, safe_modes=None):
        self.eigenvalue = eigenvalue
        self.horizon = horizon
        self.modes = list(modes or [])
        self.safe_modes = safe_modes
        msg = f"backward amplification overflows for eigenvalue {eigenvalue:.6g} at T={horizon:.6g}"
        if self.modes:
            msg += f"; offending modes {self.modes[:8]}{'...' if len(self.modes) > 8 else ''}"
        if safe_modes is not None:
            msg += f"; truncating to N={safe_modes} would succeed"
        super().__init__(msg)


class IterationFailure(FracSolveError):
    """Picard iteration did not reach the tolerance within the sweep budget."""

    def __init__(self, message: str, residuals: list[float]):
        self.residuals = list(residuals)
        super().__init__(message)


class DivergingIteration(IterationFailure):
    pass


class BlowUpSuspected(FracSolveError):
    def __init__(self, message: str, t_est: float | None = None, residuals: list[float] | None = None):
        self.t_est = t_est
        self.residuals = list(residuals or [])
        super().__init__(message)


class CertificateUnavailable(FracSolveError):
    pass


class InsufficientData(FracSolveError, ValueError):
    pass


class ConfigError(FracSolveError):
    """Configuration file missing or unparsable."""
