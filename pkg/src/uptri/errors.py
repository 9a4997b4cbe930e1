"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible lengths."""


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class SizeError(ValueError):
    """A requested computation exceeds a hard size cap."""


class ConvergenceError(ArithmeticError):
    """An iterative numerical method failed to converge."""
