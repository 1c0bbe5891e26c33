class NmtError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ShapeError(NmtError, ValueError):
    """Operand shapes do not fit the operation."""


class NumericalError(NmtError, ArithmeticError):
    """A loss, gradient or function value stopped being finite."""

    def __init__(self, message, epoch=None, batch_index=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index


class ConfigError(NmtError, ValueError):
    """Contradictory or out-of-range configuration."""


class DataError(NmtError, ValueError):
    """Unreadable or ill-formed corpus, vocabulary, alignment or model file."""
