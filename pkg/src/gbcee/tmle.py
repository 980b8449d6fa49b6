"""Targeted maximum likelihood estimators for one adjustment set.

Both nuisance models adjust for the same covariates: the outcome model
regresses Y on (1, X, U_set) with an identity or logit link, the exposure
model regresses X on (1, U_set) with an identity or logit link.  Four
estimators cover the outcome/exposure type combinations:

* continuous Y, continuous X -- linear fluctuation along ``X - E[X|U]``,
  effect of a unit increase in X;
* continuous or binary Y, binary X -- additive fluctuation of
  ``E[Y | X=x, U]`` with weights ``I(X=x) / P(X=x | U)``, per level x;
* binary Y, continuous X -- logistic fluctuation along the density ratio
  ``f_X(X) / f_X(X | U)``.

Propensities are truncated to [0.005, 0.995] and density ratios are capped at
200 so that near-positivity violations give finite, reproducible output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset, VariableType
from .exceptions import EstimationError, FluctuationError, RankDeficientError, UndefinedContrastError
from .glm import Family, GlmFit, add_intercept, fit_glm, linear_predictor

logger = logging.getLogger(__name__)

PROPENSITY_BOUNDS = (0.005, 0.995)
DENSITY_RATIO_CAP = 200.0
MAX_BOOTSTRAP_FAILURE_RATE = 0.2


@dataclass(frozen=True)
class Contrast:
    """Which causal contrast to estimate.

    ``x`` and ``x_prime`` are the exposure levels compared; for a binary
    exposure they are 1 and 0.  With a continuous exposure and a continuous
    outcome the effect is always that of a unit increase (``unit_shift``).
    """

    kind: str = "difference"
    x: float = 1.0
    x_prime: float = 0.0

    def __post_init__(self):
        if self.kind not in ("difference", "ratio"):
            raise ValueError(f"contrast kind must be 'difference' or 'ratio', got {self.kind!r}")

    def unit_shift(self, data: Dataset) -> bool:
        return data.outcome_type is VariableType.CONTINUOUS and data.exposure_type is VariableType.CONTINUOUS


@dataclass(frozen=True, eq=False)
class LevelMean:
    """TMLE of ``E[Y^x]`` for one exposure level."""

    mean: float
    eif: np.ndarray
    epsilon: float
    n_truncated: int = 0
    n_out_of_range: int = 0


@dataclass(frozen=True, eq=False)
class ModelEstimate:
    delta_hat: float
    eif: np.ndarray
    variance: float
    epsilon: tuple = ()
    means: tuple = ()
    outcome_fit: GlmFit | None = field(default=None, repr=False)
    exposure_fit: GlmFit | None = field(default=None, repr=False)
    n_truncated: int = 0
    n_out_of_range: int = 0

    def __post_init__(self):
        eif = np.asarray(self.eif, dtype=float)
        eif.flags.writeable = False
        object.__setattr__(self, "eif", eif)


def _family(kind: VariableType) -> Family:
    return Family.BERNOULLI if kind is VariableType.BINARY else Family.GAUSSIAN


def _covariates(data: Dataset, subset):
    return data.U[:, subset.indices] if subset is not None and subset.size else np.empty((data.n, 0))


def outcome_design(data: Dataset, subset, x=None) -> np.ndarray:
    """Design ``[1, X, U_set]``; with ``x`` given the exposure column is set to that level."""
    xcol = data.x if x is None else np.full(data.n, float(x))
    return np.column_stack([np.ones(data.n), xcol, _covariates(data, subset)])


def exposure_design(data: Dataset, subset) -> np.ndarray:
    return add_intercept(_covariates(data, subset))


def _checked(fit: GlmFit, what: str) -> GlmFit:
    if not fit.converged:
        raise EstimationError(f"{what} model did not converge")
    return fit


def fit_outcome(data: Dataset, subset) -> GlmFit:
    return _checked(fit_glm(outcome_design(data, subset), data.y, _family(data.outcome_type)), "outcome")


def fit_exposure(data: Dataset, subset) -> GlmFit:
    return _checked(fit_glm(exposure_design(data, subset), data.x, _family(data.exposure_type)), "exposure")


def tmle_cont_cont(data: Dataset, subset, *, outcome_fit=None, exposure_fit=None) -> ModelEstimate:
    """Effect of a unit increase of a continuous exposure on a continuous outcome.

    ``epsilon`` is the no-intercept least-squares coefficient of the outcome
    residual on the exposure residual ``X - E[X|U]``; the estimate is the
    exposure coefficient of the outcome model plus ``epsilon``.  The influence
    function is ``(X - xhat) (Y - Q1) / mean((X - xhat)**2)``.
    """
    outcome_fit = outcome_fit or fit_outcome(data, subset)
    exposure_fit = exposure_fit or fit_exposure(data, subset)
    y_resid = data.y - outcome_fit.fitted_values
    x_resid = data.x - exposure_fit.fitted_values
    ss = float(x_resid @ x_resid)
    total = float(np.sum((data.x - data.x.mean()) ** 2))
    if ss <= 1e-12 * max(total, np.finfo(float).tiny):
        raise FluctuationError("exposure residual has zero variance: the covariates explain the exposure exactly")
    eps = float(x_resid @ y_resid) / ss
    delta = float(outcome_fit.coefficients[1]) + eps
    eif = x_resid * (y_resid - eps * x_resid) / (ss / data.n)
    return ModelEstimate(
        delta, eif, eif_variance(eif, data.n), (eps,), (),
        outcome_fit, exposure_fit,
    )


def _propensity_of_level(data, exposure_fit, x):
    g = np.clip(exposure_fit.fitted_values, 1e-300, 1.0)
    gx = g if x == 1 else 1.0 - g
    lo, hi = PROPENSITY_BOUNDS
    n_truncated = int(np.sum((gx < lo) | (gx > hi)))
    return np.clip(gx, lo, hi), n_truncated


def tmle_mean_binx(data: Dataset, subset, x, *, outcome_fit=None, exposure_fit=None) -> LevelMean:
    """TMLE of ``E[Y^x]`` for a binary exposure (continuous or binary outcome).

    The initial predictions ``Q0 = E[Y | X=x, U]`` are shifted by the weighted
    mean residual among subjects with ``X = x``, weights ``1 / P(X=x | U)``.
    The additive shift is applied on the response scale for binary outcomes
    too, so means can fall slightly outside [0, 1]; such rows are counted.
    """
    if data.exposure_type is not VariableType.BINARY:
        raise ValueError("tmle_mean_binx needs a binary exposure")
    x = int(x)
    outcome_fit = outcome_fit or fit_outcome(data, subset)
    exposure_fit = exposure_fit or fit_exposure(data, subset)
    q0 = _family(data.outcome_type).inverse_link(linear_predictor(outcome_fit, outcome_design(data, subset, x)))
    gx, n_truncated = _propensity_of_level(data, exposure_fit, x)
    at_level = data.x == x
    if not at_level.any():
        raise EstimationError(f"no observations with exposure level {x}")
    w = at_level / gx
    eps = float(np.sum(w * (data.y - q0)) / np.sum(w))
    q1 = q0 + eps
    mean = float(q1.mean())
    eif = w * (data.y - q1) + q1 - mean
    n_oor = 0
    if data.outcome_type is VariableType.BINARY:
        n_oor = int(np.sum((q1 < 0.0) | (q1 > 1.0)))
    return LevelMean(mean, eif, eps, n_truncated, n_oor)


def _density_ratio(level, cond_mean, cond_sd, marg_mean, marg_sd):
    log_ratio = norm.logpdf(level, marg_mean, marg_sd) - norm.logpdf(level, cond_mean, cond_sd)
    capped = log_ratio > np.log(DENSITY_RATIO_CAP)
    return np.exp(np.minimum(log_ratio, np.log(DENSITY_RATIO_CAP))), int(capped.sum())


def tmle_bin_cont(data: Dataset, subset, x, *, outcome_fit=None, exposure_fit=None) -> LevelMean:
    """TMLE of ``E[Y^x]`` for a binary outcome and a continuous exposure.

    The clever covariate is the ratio of the marginal exposure density (normal
    with the sample mean and SD of X) to the conditional one (normal around
    the exposure-model prediction with the MLE residual SD).  ``epsilon`` is
    the coefficient of a no-intercept logistic regression of Y on the clever
    covariate at the observed exposure, with offset ``logit Q0(X_i, U_i)``;
    the level-x predictions are then updated with the clever covariate at x.

    The influence-function proxy ``H(X)(Y - Q1(X)) + Q1(x) - mean`` has mean
    zero, but its residual term is shared by both levels of a contrast, so the
    bootstrap variance is the safer choice for this exposure/outcome type.
    """
    if data.outcome_type is not VariableType.BINARY or data.exposure_type is not VariableType.CONTINUOUS:
        raise ValueError("tmle_bin_cont needs a binary outcome and a continuous exposure")
    outcome_fit = outcome_fit or fit_outcome(data, subset)
    exposure_fit = exposure_fit or fit_exposure(data, subset)
    cond_mean = exposure_fit.fitted_values
    cond_sd = np.sqrt(exposure_fit.dispersion)
    marg_mean, marg_sd = float(data.x.mean()), float(data.x.std())
    h_obs, capped_obs = _density_ratio(data.x, cond_mean, cond_sd, marg_mean, marg_sd)
    h_lvl, capped_lvl = _density_ratio(float(x), cond_mean, cond_sd, marg_mean, marg_sd)
    eta_obs = linear_predictor(outcome_fit, outcome_design(data, subset))
    try:
        flu = fit_glm(h_obs[:, None], data.y, Family.BERNOULLI, offset=eta_obs)
    except RankDeficientError:
        raise FluctuationError("clever covariate is identically zero") from None
    if not flu.converged:
        raise FluctuationError("logistic fluctuation did not converge")
    eps = float(flu.coefficients[0])
    q1_obs = flu.fitted_values
    eta_lvl = linear_predictor(outcome_fit, outcome_design(data, subset, x))
    q1 = Family.BERNOULLI.inverse_link(eta_lvl + eps * h_lvl)
    mean = float(q1.mean())
    eif = h_obs * (data.y - q1_obs) + q1 - mean
    return LevelMean(mean, eif, eps, capped_obs + capped_lvl, 0)


def assemble_contrast(level1: LevelMean, level0: LevelMean, contrast: Contrast, **extra) -> ModelEstimate:
    """Combine two level means into a difference or a ratio (delta-method influence function)."""
    m1, m0 = level1.mean, level0.mean
    if contrast.kind == "difference":
        delta = m1 - m0
        eif = level1.eif - level0.eif
    else:
        if m0 <= 0:
            raise UndefinedContrastError(f"ratio contrast undefined: reference mean {m0:g} <= 0")
        delta = m1 / m0
        eif = level1.eif / m0 - m1 * level0.eif / m0**2
    return ModelEstimate(
        float(delta),
        eif,
        eif_variance(eif, eif.shape[0]),
        (level1.epsilon, level0.epsilon),
        (m1, m0),
        n_truncated=level1.n_truncated + level0.n_truncated,
        n_out_of_range=level1.n_out_of_range + level0.n_out_of_range,
        **extra,
    )


def eif_variance(est, n=None) -> float:
    """Sample variance (ddof=1) of the influence function divided by ``n``."""
    eif = est.eif if isinstance(est, ModelEstimate) else np.asarray(est, dtype=float)
    n = eif.shape[0] if n is None else n
    if eif.shape[0] < 2:
        return 0.0
    return float(np.var(eif, ddof=1) / n)


def estimate_model(data: Dataset, subset, contrast: Contrast | None = None, *, outcome_fit=None, exposure_fit=None) -> ModelEstimate:
    """TMLE of the contrast for one adjustment set, dispatching on variable types."""
    contrast = contrast or Contrast()
    if contrast.kind == "ratio" and data.outcome_type is not VariableType.BINARY:
        raise ValueError("the ratio contrast is only available for a binary outcome")
    outcome_fit = outcome_fit or fit_outcome(data, subset)
    exposure_fit = exposure_fit or fit_exposure(data, subset)
    fits = dict(outcome_fit=outcome_fit, exposure_fit=exposure_fit)
    if data.exposure_type is VariableType.BINARY:
        return assemble_contrast(
            tmle_mean_binx(data, subset, 1, **fits), tmle_mean_binx(data, subset, 0, **fits), contrast, **fits
        )
    if data.outcome_type is VariableType.CONTINUOUS:
        if contrast.kind != "difference":
            raise ValueError("continuous outcome and exposure support only the unit-shift difference")
        return tmle_cont_cont(data, subset, **fits)
    return assemble_contrast(
        tmle_bin_cont(data, subset, contrast.x, **fits),
        tmle_bin_cont(data, subset, contrast.x_prime, **fits),
        contrast,
        **fits,
    )


@dataclass(frozen=True, eq=False)
class BootstrapEstimates:
    estimates: np.ndarray
    n_failed: int

    @property
    def variance(self) -> float:
        return float(np.var(self.estimates, ddof=1))


def bootstrap_estimates(data: Dataset, subset, contrast=None, B=200, rng_seed=None) -> BootstrapEstimates:
    """Refit both nuisance models and the TMLE on ``B`` row resamples.

    Replicates whose fits fail are dropped; more than 20% failures raise
    :class:`EstimationError`.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    rng = np.random.default_rng(rng_seed)
    values = []
    failed = 0
    for _ in range(B):
        rows = rng.integers(0, data.n, size=data.n)
        try:
            values.append(estimate_model(data.take(rows), subset, contrast).delta_hat)
        except (EstimationError, FluctuationError, RankDeficientError, UndefinedContrastError):
            failed += 1
    if failed > MAX_BOOTSTRAP_FAILURE_RATE * B or len(values) < 2:
        raise EstimationError(f"{failed} of {B} bootstrap replicates failed")
    if failed:
        logger.warning("bootstrap: %d of %d replicates failed and were dropped", failed, B)
    return BootstrapEstimates(np.array(values), failed)


def bootstrap_variance(data: Dataset, subset, contrast=None, B=200, rng_seed=None) -> float:
    """Nonparametric bootstrap variance of the TMLE for a fixed adjustment set."""
    return bootstrap_estimates(data, subset, contrast, B, rng_seed).variance
