"""Fixed-adjustment-set reference estimators: parametric g-formula and AIPW (binary exposure)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, VariableType
from .exceptions import UndefinedContrastError
from .glm import Family, linear_predictor
from .model_space import AdjustmentSet
from .tmle import PROPENSITY_BOUNDS, Contrast, fit_exposure, fit_outcome, outcome_design


@dataclass(frozen=True)
class BenchmarkResult:
    delta_hat: float
    variance: float | None
    estimator: str
    subset: AdjustmentSet


def _require_binary_exposure(data):
    if data.exposure_type is not VariableType.BINARY:
        raise ValueError("the benchmark estimators need a binary exposure")


def _arm_predictions(data, subset):
    fit = fit_outcome(data, subset)
    family = Family.BERNOULLI if data.outcome_type is VariableType.BINARY else Family.GAUSSIAN
    q1 = family.inverse_link(linear_predictor(fit, outcome_design(data, subset, 1)))
    q0 = family.inverse_link(linear_predictor(fit, outcome_design(data, subset, 0)))
    return fit, q1, q0


def gformula(data: Dataset, subset: AdjustmentSet, contrast: Contrast | None = None) -> BenchmarkResult:
    """Standardisation ``mean(E[Y|X=1,U] - E[Y|X=0,U])`` from a main-terms outcome GLM.

    For a continuous outcome the estimate equals the exposure coefficient and
    its variance is the HC0 sandwich variance of that coefficient.  No
    variance is reported for a binary outcome.
    """
    _require_binary_exposure(data)
    contrast = contrast or Contrast()
    fit, q1, q0 = _arm_predictions(data, subset)
    m1, m0 = float(q1.mean()), float(q0.mean())
    if contrast.kind == "ratio":
        if m0 <= 0:
            raise UndefinedContrastError(f"ratio contrast undefined: reference mean {m0:g} <= 0")
        delta = m1 / m0
    else:
        delta = m1 - m0
    variance = None
    if data.outcome_type is VariableType.CONTINUOUS:
        D = outcome_design(data, subset)
        resid = data.y - fit.fitted_values
        meat = (D * resid[:, None] ** 2).T @ D
        cov = fit.cov_unscaled @ meat @ fit.cov_unscaled
        variance = float(cov[1, 1])
    return BenchmarkResult(float(delta), variance, "gformula", subset)


def aipw_from_nuisance(y, x, propensity, q1, q0, contrast: Contrast | None = None):
    """AIPW estimate and per-row influence values from given nuisance predictions.

    ``propensity`` is ``P(X=1|U)`` (truncated to [0.005, 0.995] here); ``q1``
    and ``q0`` are the outcome predictions under exposure and no exposure.
    """
    contrast = contrast or Contrast()
    y, x = np.asarray(y, dtype=float), np.asarray(x, dtype=float)
    g = np.clip(np.asarray(propensity, dtype=float), *PROPENSITY_BOUNDS)
    phi1 = x / g * (y - q1) + q1
    phi0 = (1.0 - x) / (1.0 - g) * (y - q0) + q0
    m1, m0 = float(phi1.mean()), float(phi0.mean())
    if contrast.kind == "difference":
        delta = m1 - m0
        infl = (phi1 - m1) - (phi0 - m0)
    else:
        if m0 <= 0:
            raise UndefinedContrastError(f"ratio contrast undefined: reference mean {m0:g} <= 0")
        delta = m1 / m0
        infl = (phi1 - m1) / m0 - m1 * (phi0 - m0) / m0**2
    return float(delta), infl


def aipw(data: Dataset, subset: AdjustmentSet, contrast: Contrast | None = None) -> BenchmarkResult:
    """Augmented inverse probability weighting with logistic propensity and main-terms outcome GLM.

    The variance is the sample variance (ddof=1) of the influence values over n.
    """
    _require_binary_exposure(data)
    _, q1, q0 = _arm_predictions(data, subset)
    g = fit_exposure(data, subset).fitted_values
    delta, infl = aipw_from_nuisance(data.y, data.x, g, q1, q0, contrast)
    return BenchmarkResult(delta, float(np.var(infl, ddof=1) / data.n), "aipw", subset)
