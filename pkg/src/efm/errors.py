"""Exception hierarchy shared across the package.

Every error carries enough context (index, line, location) to point at the
offending input. The CLI maps ``ValidationError`` subclasses to exit code 2
and ``NumericalError`` subclasses to exit code 3.
"""


class EfmError(Exception):
    """Base class for all package errors."""


class ValidationError(EfmError, ValueError):
    """Input failed a structural or domain check."""


class NumericalError(EfmError, RuntimeError):
    """A numerical routine failed to produce a trustworthy answer."""


class RangeTooLarge(ValidationError):
    pass


class InvalidGrid(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class MagicMismatch(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class MissingDay(ValidationError):
    def __init__(self, message, day=None):
        super().__init__(message)
        self.day = day


class InvalidWarp(ValidationError):
    pass


class NonInvertible(ValidationError):
    pass


class EmptyKernelSupport(ValidationError):
    def __init__(self, message, center=None):
        super().__init__(message)
        self.center = center


class NoConvergence(NumericalError):
    """Raised (or attached as a warning) when an iterative solver stalls.

    ``best`` holds the best iterate found so far and ``cell`` the grid cell
    being processed, when known.
    """

    def __init__(self, message, best=None, cell=None):
        super().__init__(message)
        self.best = best
        self.cell = cell


class NoConvergenceWarning(RuntimeWarning):
    pass


class DegenerateInputWarning(RuntimeWarning):
    pass
