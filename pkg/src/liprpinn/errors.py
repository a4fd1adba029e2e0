"""Exception types shared across the package."""


class LiprError(Exception):
    """Base class for all package errors."""


class DimensionError(LiprError, ValueError):
    """Raised when array shapes or input dimensions do not agree."""


class NonFiniteError(LiprError, FloatingPointError):
    """Raised when a NaN or Inf shows up where finite values are required."""


class ConfigError(LiprError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"[{field}] {message}")


class ExpressionError(LiprError, ValueError):
    """An exact-solution expression could not be parsed."""


class TrainingDiverged(LiprError):
    """The loss became non-finite during training; ``history`` holds the rows so far."""

    def __init__(self, message: str, history=None, params=None):
        super().__init__(message)
        self.history = history if history is not None else []
        self.params = params
