"""Exception hierarchy shared across the package."""

from sklearn.exceptions import NotFittedError


class CytoscreenError(Exception):
    """Base class for all package errors."""


class ChannelMismatchError(CytoscreenError, ValueError):
    pass


class InvalidParameterError(CytoscreenError, ValueError):
    pass


class InvalidInputError(CytoscreenError, ValueError):
    pass


class ShapeError(CytoscreenError, ValueError):
    pass


class NotFoundError(CytoscreenError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class StateError(CytoscreenError, NotFittedError):
    """Raised when an operation needs a fitted model or a cached forward pass."""


class TrainingError(CytoscreenError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class WeightLoadError(CytoscreenError, ValueError):
    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class ConfigurationError(CytoscreenError, ValueError):
    pass


class StratificationError(CytoscreenError, ValueError):
    pass


class DataError(CytoscreenError, OSError):
    pass
