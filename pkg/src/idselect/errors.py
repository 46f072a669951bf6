"""Exception hierarchy shared by all modules.

Every domain error derives from :class:`IdSelectError` so the command line
front end can map them onto exit status 1 in one place.
"""


class IdSelectError(ValueError):
    """Base class for domain errors."""


class GraphError(IdSelectError):
    """Invalid diagram structure or an unknown vertex."""


class GraphParseError(GraphError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CycleError(GraphError):
    pass


class PathBudgetExceeded(GraphError):
    pass


class OverlappingSetsError(IdSelectError):
    pass


class CovarianceError(IdSelectError):
    """Malformed or non positive-definite covariance matrix."""


class SingularBlockError(CovarianceError):
    pass


class WeakInstrumentError(IdSelectError):
    pass


class InvalidStrategyError(IdSelectError):
    """A criterion certificate required as a precondition is not valid."""


class SimulationError(IdSelectError):
    pass
