class IllPosedProblemError(ValueError):
    """Raised when a saddle-point system is singular or too badly conditioned to trust."""


class NumericOverflowError(FloatingPointError):
    """Raised when a state update produces non-finite values."""
