"""Exception types shared across the package."""


class ManynetsError(Exception):
    """Base class for every error this package raises on purpose."""


class DataError(ManynetsError):
    """Invalid input data: malformed files, bad labels, out-of-range indices."""


class ModelValidationError(ManynetsError):
    """A model references attributes or labels the data does not provide."""


class EnumerationBoundError(ManynetsError):
    """The requested graph space is too large to enumerate."""


class NonconvergenceError(ManynetsError):
    """An estimator failed to produce a usable estimate.

    ``fit`` carries the last iterate (with ``converged=False``) when one is
    available, so callers can still persist partial output.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class SeparationError(NonconvergenceError):
    """Monotone likelihood: the named coefficients diverge without bound."""

    def __init__(self, message, terms=(), fit=None):
        super().__init__(message, fit=fit)
        self.terms = tuple(terms)


class CollinearityError(ManynetsError):
    """Singular information matrix; names the implicated columns."""

    def __init__(self, message, terms=()):
        super().__init__(message)
        self.terms = tuple(terms)


class DegeneracyError(ManynetsError):
    """Simulated statistics are degenerate (zero variance component)."""
