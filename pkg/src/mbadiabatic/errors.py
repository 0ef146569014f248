"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from ``AdiabaticError``
so the CLI can map it to an exit code.
"""

from __future__ import annotations


class AdiabaticError(Exception):
    """Base class for package errors."""


class InvalidInputError(AdiabaticError, ValueError):
    pass


class ResourceError(AdiabaticError):
    """A configured size cap would be exceeded."""


class NumericalError(AdiabaticError):
    """A numerical invariant failed beyond its tolerance."""


class GaplessModelError(NumericalError):
    """Ground state is (numerically) degenerate."""

    def __init__(self, message: str, splitting: float, s: float | None = None):
        super().__init__(message)
        self.splitting = splitting
        self.s = s


class PreconditionError(AdiabaticError, ValueError):
    pass


class FilterConstructionError(NumericalError):
    def __init__(self, message: str, worst_omega: float, deviation: float):
        super().__init__(message)
        self.worst_omega = worst_omega
        self.deviation = deviation


class TruncationError(NumericalError):
    def __init__(self, message: str, achieved_bound: float):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class DependencyError(AdiabaticError):
    """A lower-order quantity needed by the recursion is missing."""


class RecursionResidualError(NumericalError):
    def __init__(self, message: str, order: int, s: float, residual: float):
        super().__init__(message)
        self.order = order
        self.s = s
        self.residual = residual


class ConstantsIntegrationError(NumericalError):
    pass


class IntegrationError(NumericalError):
    def __init__(self, message: str, achieved_tol: float):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class ConfigError(AdiabaticError, ValueError):
    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []
