"""Exception types shared across the package."""


class PPGBenchError(Exception):
    """Base class for all package errors."""


class ValidationError(PPGBenchError, ValueError):
    """Input violates a documented precondition or invariant."""


class DatasetFormatError(ValidationError):
    """A manifest or signal blob does not conform to the dataset file format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteError(PPGBenchError, FloatingPointError):
    """NaN or infinity appeared in a forward/backward pass or a loss."""


class TrainingAborted(PPGBenchError, RuntimeError):
    """Training stopped because the loss became non-finite."""
