"""Model-averaged double robust estimation of causal effects with confounder-targeting priors."""

__version__ = "0.1.0"

from .core import GbceeConfig, GbceeResult, estimate, posterior_moments  # noqa: E402
from .data import Dataset, VariableType  # noqa: E402
from .estimators import AIPW, GBCEE, GFormula  # noqa: E402
from .exceptions import (  # noqa: E402
    DataError,
    EstimationError,
    FluctuationError,
    GbceeError,
    RankDeficientError,
    UndefinedContrastError,
)
from .model_space import AdjustmentSet, PriorConfig  # noqa: E402
from .tmle import Contrast  # noqa: E402

__all__ = [
    "AIPW",
    "AdjustmentSet",
    "Contrast",
    "DataError",
    "Dataset",
    "EstimationError",
    "FluctuationError",
    "GBCEE",
    "GFormula",
    "GbceeConfig",
    "GbceeError",
    "GbceeResult",
    "PriorConfig",
    "RankDeficientError",
    "UndefinedContrastError",
    "VariableType",
    "estimate",
    "posterior_moments",
]
