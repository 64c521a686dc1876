"""Exception hierarchy shared by all modules."""


class ScreeningError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ScreeningError, ValueError):
    """An argument lies outside the domain of the operation."""


class InputFormatError(ScreeningError, ValueError):
    """A score / label file is malformed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class DegenerateBandError(ScreeningError):
    """A band carries zero probability mass."""


class UnsupportedDistributionError(ScreeningError):
    """The operation is not defined for this kind of distribution."""


class RegimeError(ScreeningError):
    """Budgets fall outside the hypotheses of a guarantee.

    ``value`` carries the quantity that was computed anyway, if any.
    """

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ConvergenceError(ScreeningError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BracketError(ScreeningError):
    """Bisection found no sign change on its bracket."""


class CapacityError(ScreeningError):
    """An enumeration would exceed the configured cap."""
