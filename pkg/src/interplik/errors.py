"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class CoverageError(ValueError):
    """A point lies outside the range an interpolation grid can serve."""


class EvaluationError(ArithmeticError):
    """A user-supplied function returned a non-finite value."""
