"""Exception hierarchy shared by all epic modules."""


class EpicError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(EpicError):
    """Arguments violate a documented precondition."""


class InstanceTooLarge(EpicError):
    """Exhaustive computation refused to guard against combinatorial blowup."""


class DegenerateBudget(EpicError):
    """Medoid budget makes every point its own isolated medoid."""


class ClassExhausted(EpicError):
    """An elimination round emptied a class entirely.

    Carries the partial training trace in ``trace`` when available.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NumericalDivergence(EpicError):
    """Training produced non-finite values; ``epoch`` records where."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateTarget(EpicError):
    """Attack target has a zero gradient; alignment is undefined."""


class NoEffectiveSubset(EpicError):
    """No poison subset satisfies the effectiveness definition."""


class OutOfRegime(EpicError):
    """Convergence-bound parameters outside the regime the bound covers."""


class InvalidSurface(EpicError):
    """A loss value fell below the assumed global minimum."""


class ConfigError(EpicError):
    """Experiment configuration failed validation; ``key`` names the field."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class FileFormatError(EpicError):
    """A data file failed to parse.

    ``offset`` is a byte offset for binary files, ``line`` a 1-based line
    number for text files; whichever applies is set.
    """

    def __init__(self, message, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line
