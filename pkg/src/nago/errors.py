"""Exception hierarchy shared across the toolkit."""


class NagoError(Exception):
    """Base class for all toolkit errors."""


class ParameterDomainError(NagoError, ValueError):
    """A parameter is outside its documented domain (e.g. k >= n in a WS graph)."""


class InfeasibleSplitError(NagoError, ValueError):
    """A stage split cannot give every stage at least one node."""


class BudgetError(NagoError):
    """The parameter budget is below the smallest achievable architecture.

    Carries the minimum achievable parameter count so callers can report
    how far off the request was.
    """

    def __init__(self, message: str, min_achievable: int):
        super().__init__(message)
        self.min_achievable = min_achievable


class InsufficientDataError(NagoError, ValueError):
    """Not enough data points for the requested statistic."""


class IrInvariantError(NagoError, ValueError):
    """A serialized or constructed architecture violates its invariants."""


class ProtocolError(NagoError):
    """Malformed or version-mismatched evaluation-protocol traffic."""


class WorkerError(NagoError):
    """The external evaluation worker failed to start or died."""
