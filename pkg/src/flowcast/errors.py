"""Exception hierarchy shared by every flowcast module."""


class FlowcastError(Exception):
    """Base class for all errors raised by flowcast."""


class InvalidInputError(FlowcastError, ValueError):
    """Input values or shapes violate an operation's preconditions."""


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but too short or too flat to process."""


class UndefinedEntropyError(FlowcastError, ArithmeticError):
    """Sample entropy has no template matches at length m or m + 1."""


class EmptyDatasetError(InvalidInputError):
    """Windowing produced no samples."""


class DegenerateScalerError(InvalidInputError):
    """Min-max scaling of a constant feature."""


class DivergenceError(FlowcastError, ArithmeticError):
    """Training loss became non-finite."""

    def __init__(self, epoch, loss=float("nan")):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class InvalidPackError(InvalidInputError):
    """A wolf pack is too small or out of shape."""


class TuningFailedError(FlowcastError):
    """Every hyperparameter candidate diverged."""

    def __init__(self, message, history=None):
        self.history = history or []
        super().__init__(message)


class AlignmentError(InvalidInputError):
    """Neighbour series are not time-aligned with the target series."""


class ParseError(FlowcastError, ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnusableSeriesError(InvalidInputError):
    """Too many missing samples to reconstruct a series."""


class StageError(FlowcastError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
