"""Exception hierarchy shared by all modules.

Each class maps to one CLI exit code (see ``cli.EXIT_CODES``).
"""


class AsepLdpError(Exception):
    """Base class for package errors."""


class DomainError(AsepLdpError, ValueError):
    """An argument lies outside the domain of a formula."""


class SingularityError(DomainError):
    """Evaluation point hits a pole or a vanishing denominator."""


class OptimizationError(AsepLdpError, RuntimeError):
    """A maximization failed to bracket or converge."""


class QuadratureError(AsepLdpError, RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class TruncationError(AsepLdpError, RuntimeError):
    """A truncation budget (contour tail, tracked particles) was exceeded."""


class InconclusiveError(AsepLdpError, RuntimeError):
    """A statistical decision could not single out one answer."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table
