"""Exception types shared by the solver modules."""


class SolverError(Exception):
    """Base class for everything the package raises on purpose."""


class InternalError(SolverError):
    """A state the procedure should never reach (a bug, not bad input)."""


class FrozenStateError(InternalError):
    """No rule applies to a non-final state."""


class InvariantViolation(InternalError):
    """A debug-mode state check failed."""


class BudgetError(SolverError):
    """An oracle was asked to enumerate more points than allowed."""


class ParseError(SolverError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.reason = message
