"""Exception hierarchy shared by the solvers and the command line."""

from __future__ import annotations


class OTGeoError(Exception):
    """Base class for all library errors."""


class InvalidProbability(OTGeoError, ValueError):
    """A vector or matrix violates a simplex / nonnegativity constraint."""

    def __init__(self, message: str, field: str | None = None, index=None):
        self.field = field
        self.index = index
        where = ""
        if field is not None:
            where = f"{field}"
            if index is not None:
                where += f"{list(index) if isinstance(index, tuple) else [index]}"
            where += ": "
        super().__init__(where + message)


class DimensionMismatch(OTGeoError, ValueError):
    pass


class SupportViolation(OTGeoError, ValueError):
    """KL[P:Q] is infinite because Q vanishes where P does not."""


class ParseError(OTGeoError, ValueError):
    def __init__(self, message: str, path: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        pos = ""
        if path is not None:
            pos = str(path)
            if line is not None:
                pos += f":{line}"
                if column is not None:
                    pos += f":{column}"
            pos += ": "
        super().__init__(pos + message)


class NonConvergence(OTGeoError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate is attached so callers can still report on it.
    """

    def __init__(self, message: str, iterations: int, residual: float,
                 result=None):
        self.iterations = iterations
        self.residual = residual
        self.result = result
        super().__init__(f"{message} (iterations={iterations}, "
                         f"residual={residual:.3e})")


class NumericalUnderflow(OTGeoError, FloatingPointError):
    pass


class NonPositiveVariance(OTGeoError, ValueError):
    pass
