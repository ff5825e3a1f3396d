"""Exception hierarchy shared across the package."""


class GanInvError(Exception):
    """Base class for all errors raised by ganinv."""


class ShapeError(GanInvError, ValueError):
    """Operand shapes are incompatible with an operation's contract."""


class NumericError(GanInvError, ArithmeticError):
    """A non-finite value appeared where finiteness is promised.

    ``node`` carries the graph node (or a description of it) where the
    problem was first detected, when available.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SpecError(GanInvError, ValueError):
    """A model description is malformed (bad chaining, wrong output layer...)."""


class ConfigError(GanInvError, ValueError):
    """A configuration value is out of its documented range."""


class DataError(GanInvError):
    """Dataset contents violate an invariant."""
