"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates a documented precondition (bad dimensions, bad labels, ...)."""


class ParseError(ValueError):
    """Malformed input file. Carries the 1-based line (and column name) when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)


class NumericalError(RuntimeError):
    """A numerical routine failed (factorization breakdown, divergence, ...)."""


class SolverError(NumericalError):
    """Cone solve did not reach an acceptable solution; carries the solution object."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
