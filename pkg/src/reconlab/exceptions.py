"""Exception hierarchy shared by every reconlab module."""


class ReconLabError(Exception):
    """Base class for all library errors."""


class ParameterError(ReconLabError, ValueError):
    """An argument violates an operation's precondition."""


class QueryRangeError(ParameterError, IndexError):
    """A query index falls outside ``[0, n)``."""


class CapacityError(ParameterError):
    """A request would exceed a hard size guard (e.g. exponential enumeration)."""


class SchemaError(ReconLabError, KeyError):
    """An attribute or field name is unknown or missing on one side."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class BudgetExhaustedError(ReconLabError):
    """The privacy accountant refused a charge that would overrun the budget."""


class InfeasibleError(ReconLabError):
    """No candidate database is consistent with the answers at the stated bound."""


class SolverError(ReconLabError):
    """The LP/MILP backend stopped without an optimal solution."""

    def __init__(self, message: str, status: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.status = status
        self.diagnostics = diagnostics or {}


class ConsistencyError(ReconLabError):
    """Tables or marginals disagree with each other."""


class DataError(ReconLabError):
    """Ground-truth data is incomplete (e.g. a missing registry entry)."""
