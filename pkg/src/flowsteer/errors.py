"""Exception hierarchy shared across the toolkit."""


class FlowSteerError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(FlowSteerError, ValueError):
    """An argument lies outside its documented domain."""


class ShapeError(FlowSteerError, ValueError):
    """An array does not have the shape an operation requires."""


class ConfigError(FlowSteerError, ValueError):
    """An experiment configuration is inconsistent or incomplete."""


class FormatError(FlowSteerError, ValueError):
    """A serialized file is malformed; carries the byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(FlowSteerError, ArithmeticError):
    """A numerical routine produced non-finite values; carries the step index."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class SingularityError(NumericalError):
    """A closed-form expression was evaluated at a singular point."""


class TrainingError(NumericalError):
    """Training diverged."""
