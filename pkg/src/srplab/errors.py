"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class SizeLimitError(InvalidInputError):
    """Problem size exceeds the configured ceiling of an exact routine."""


class SolverFailureError(RuntimeError):
    """An iterative solver (root finder, power iteration, ...) did not converge."""


class NumericalDegeneracyError(RuntimeError):
    """A factorization failed on a matrix that should have been well conditioned."""
