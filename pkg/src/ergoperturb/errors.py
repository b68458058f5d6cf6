"""Exception hierarchy.

Numerical statuses that the caller is expected to inspect (failed drift
certification, divergent expansions, ...) are reported as ``status`` fields
on result objects, not raised.
"""


class ErgoError(Exception):
    """Base class for all package errors."""


class DomainError(ErgoError, ValueError):
    """Invalid input: empty grid, mismatched grids, bad parameter range."""


class PreconditionError(DomainError):
    """An operation's stated precondition does not hold."""


class EligibilityError(DomainError):
    """Noise model does not satisfy the smoothness/moment requirements."""


class NumericalError(ErgoError):
    """A computation failed numerically (CLI exit code 2)."""


class TruncationError(NumericalError):
    """Too much probability mass lost outside [-X_max, X_max]."""


class NonUniquenessError(NumericalError):
    """Eigenvalue 1 of the discretized kernel is not simple."""


class DiscretizationError(NumericalError):
    """The discrete solution violates a property of the continuum object."""


class SpectralProximityError(NumericalError):
    """Resolvent requested too close to the discrete spectrum."""


class ContourError(SpectralProximityError):
    """Integration contour passes through the discrete spectrum."""


class SeparationError(NumericalError):
    """Contour does not isolate the eigenvalue 1."""
