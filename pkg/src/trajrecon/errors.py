"""Exception hierarchy shared across the package."""


class TrajReconError(Exception):
    """Base class for all package errors."""


# geo
class CoincidentPointsError(TrajReconError, ValueError):
    pass


class OutOfLocalRangeError(TrajReconError, ValueError):
    pass


# simkernel
class DegenerateAreaError(TrajReconError, ValueError):
    pass


class UnreachableWaypointError(TrajReconError):
    pass


class TooFewSamplesError(TrajReconError, ValueError):
    pass


# degrade / dataset
class EmptyTrajectoryError(TrajReconError, ValueError):
    pass


class TrajectoryTooShortError(TrajReconError, ValueError):
    pass


class EmptyCorpusError(TrajReconError, ValueError):
    pass


# codec
class MalformedNumberError(TrajReconError, ValueError):
    pass


class EmptyInputError(TrajReconError, ValueError):
    pass


class NoParseableRowsError(TrajReconError):
    """A completion contained no usable trajectory rows.

    ``counts`` carries the parse diagnostics (found/dropped tallies) so the
    caller can tell an empty answer from an echoed prompt.
    """

    def __init__(self, message: str, counts: dict | None = None):
        super().__init__(message)
        self.counts = dict(counts or {})


# reconstruct
class NoObservationsError(TrajReconError, ValueError):
    pass


class SingularCovarianceError(TrajReconError):
    pass


class TokenBudgetExceededError(TrajReconError):
    def __init__(self, estimated: int, budget: int):
        super().__init__(f"prompt needs ~{estimated} tokens, budget is {budget}")
        self.estimated = estimated
        self.budget = budget


# llmclient
class EndpointError(TrajReconError):
    """Transport or protocol failure talking to a completion endpoint."""


class EndpointTimeoutError(EndpointError):
    pass


class HttpStatusError(EndpointError):
    def __init__(self, code: int, body_excerpt: str = ""):
        super().__init__(f"HTTP {code}: {body_excerpt}")
        self.code = code
        self.body_excerpt = body_excerpt


class MalformedResponseError(EndpointError):
    pass


class PortUnavailableError(TrajReconError, OSError):
    pass


# evalreport
class TimeGridMismatchError(TrajReconError, ValueError):
    pass


class FigureWriteError(TrajReconError, OSError):
    pass


# cli
class ConfigInvalidError(TrajReconError, ValueError):
    pass


class MissingPriorStageError(TrajReconError):
    pass
