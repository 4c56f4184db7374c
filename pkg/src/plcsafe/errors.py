"""Exception types shared across the package."""


class PlcError(Exception):
    """Base class for every error raised by plcsafe."""


class DegenerateInput(PlcError, ValueError):
    pass


class ParseError(PlcError):
    pass


class ValidationError(PlcError, ValueError):
    """An invariant of a scenario value was violated.

    ``path`` names the offending field, e.g. ``robots[2].vertices_m``.
    """

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class IndexOutOfRange(PlcError, IndexError):
    pass


class BudgetExceeded(PlcError):
    pass


class DimensionMismatch(PlcError, ValueError):
    pass


class InsufficientPoints(PlcError):
    pass


class EmptyTimeline(PlcError):
    pass
