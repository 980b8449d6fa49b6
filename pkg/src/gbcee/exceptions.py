"""Exception hierarchy shared by the estimation and simulation code."""

import numpy as np


class GbceeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GbceeError, ValueError):
    """Input data failed validation (types, missing values, shapes)."""


class RankDeficientError(GbceeError, np.linalg.LinAlgError):
    """The (weighted) design matrix is singular.

    ``column`` is the index of the first design column that is a linear
    combination of the columns before it.
    """

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient at column {column}")


class FluctuationError(GbceeError):
    """The TMLE fluctuation step is degenerate."""


class UndefinedContrastError(GbceeError, ValueError):
    """The requested contrast cannot be formed (e.g. a ratio with a non-positive denominator)."""


class EstimationError(GbceeError):
    """An estimator could not produce a result (all fits failed, too many bootstrap failures, ...)."""
