"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input: malformed data, violated precondition, bad config."""


class NumericalError(RuntimeError):
    """A computation failed to converge or left its guaranteed regime."""
