"""Random walk on uni-upper-triangular matrices over F_2 / F_q and its East
process marginals: simulators, exact spectra and statistics."""

__version__ = "0.1.0"

from .errors import ConvergenceError, DimensionError, ParameterError, SizeError  # noqa: E402

__all__ = ["ConvergenceError", "DimensionError", "ParameterError", "SizeError", "__version__"]
