"""Exception types raised across the pipeline."""


class AdpriorError(Exception):
    """Base class for every error raised by this package."""


class ParseError(AdpriorError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownUserError(AdpriorError, KeyError):
    pass


class LeakageError(AdpriorError):
    """A snapshot exposed an event past its anchor cutoff."""


class MissingSidsError(AdpriorError):
    pass


class BudgetExceededError(AdpriorError):
    pass


class PositionOutOfRangeError(AdpriorError, ValueError):
    pass


class InsufficientDataError(AdpriorError, ValueError):
    pass


class DimensionMismatchError(AdpriorError, ValueError):
    pass


class CodeOutOfRangeError(AdpriorError, ValueError):
    pass


class NoPositivesError(AdpriorError, ValueError):
    pass


class EmptyEvalSetError(AdpriorError, ValueError):
    pass


class SingleClassError(AdpriorError, ValueError):
    pass


class UnknownGroupError(AdpriorError, KeyError):
    pass


class CheckpointCorruptError(AdpriorError):
    pass


class PredictorError(AdpriorError):
    """A predictor call failed after exhausting its retries."""

    def __init__(self, message: str, user_id: str | None = None):
        super().__init__(message if user_id is None else f"{message} (user {user_id})")
        self.user_id = user_id


class EndpointUnreachableError(PredictorError):
    pass


class PredictorTimeoutError(PredictorError):
    pass


class HttpStatusError(PredictorError):
    def __init__(self, code: int, user_id: str | None = None):
        super().__init__(f"endpoint returned HTTP {code}", user_id)
        self.code = code
