"""Exception types shared across the package."""


class GridSddpError(Exception):
    """Base class for all gridsddp errors."""


class ParseError(GridSddpError):
    """Malformed input file; carries file path and line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = str(path) if path else ""
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class SchemaError(GridSddpError):
    """Structurally valid file with a missing or unresolvable field."""


class DimensionMismatch(GridSddpError):
    """State / wind / network sizes disagree."""


class NumericalFailure(GridSddpError):
    """LP solve lost precision; the instance likely needs rescaling."""


class SolveFailed(GridSddpError):
    """A stage LP did not solve to optimality. Carries the (t, i, j) location."""

    def __init__(self, message, t=None, i=None, j=None):
        super().__init__(message)
        self.t = t
        self.i = i
        self.j = j


class SimultaneousChargeDischarge(GridSddpError):
    """Charge and discharge both materially positive in one period."""


class UnsupportedLag(GridSddpError):
    """Operation requires a lag-1 wind model."""


class MaxItersExceeded(GridSddpError):
    """Confidence-interval stop rule never satisfied; carries final bounds."""

    def __init__(self, message, bounds=None, history=None):
        super().__init__(message)
        self.bounds = bounds
        self.history = history or []
