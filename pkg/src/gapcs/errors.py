"""Exception types raised across the package."""


class GapcsError(Exception):
    """Base class for all package errors."""


class DimensionError(GapcsError, ValueError):
    pass


class SingularGram(GapcsError, ValueError):
    """A A^T is numerically singular, so the Gram inverse does not exist."""


class TooManySubsets(GapcsError, ValueError):
    pass


class NotOrthonormal(GapcsError, ValueError):
    pass


class DomainError(GapcsError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ParseError(GapcsError, ValueError):
    pass
