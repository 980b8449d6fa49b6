"""Scikit-learn style wrappers: ``fit(X, y, exposure)`` then read ``effect_`` and friends."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import benchmarks
from .core import Z_975, GbceeConfig, estimate
from .model_space import AdjustmentSet
from .tmle import Contrast
from .validation import check_inputs, column_names, resolve_adjustment


class _EffectEstimator(BaseEstimator):
    """Shared plumbing: input validation and the fitted-attribute contract."""

    def _dataset(self, X, y, exposure):
        data = check_inputs(X, y, exposure, self.outcome_type, self.exposure_type)
        self.n_features_in_ = data.M
        names = column_names(X)
        if names:
            self.feature_names_in_ = np.array(names, dtype=object)
        return data

    def _contrast(self):
        return Contrast(self.contrast, self.x, self.x_prime)

    def _store(self, delta, variance):
        self.effect_ = float(delta)
        self.variance_ = None if variance is None else float(variance)
        if variance is None:
            self.se_ = None
            self.conf_int_ = None
        else:
            self.se_ = math.sqrt(variance)
            self.conf_int_ = (self.effect_ - Z_975 * self.se_, self.effect_ + Z_975 * self.se_)

    def summary(self) -> dict:
        check_is_fitted(self, "effect_")
        return {"effect": self.effect_, "se": self.se_, "conf_int": self.conf_int_}


class GBCEE(_EffectEstimator):
    """Model-averaged double robust estimate of a causal contrast.

    Parameters mirror :class:`gbcee.core.GbceeConfig`; ``random_state`` seeds
    both Markov chains and the bootstrap.

    Attributes
    ----------
    effect_, variance_, se_, conf_int_ :
        Posterior mean, posterior variance, its square root and the 95% interval.
    inclusion_probs_ :
        Posterior probability that each covariate is in the outcome model.
    exposure_inclusion_probs_ :
        Posterior probability that each covariate is in the exposure model.
    result_ : GbceeResult
        Full output, including the averaged models and diagnostics.
    """

    def __init__(
        self,
        outcome_type="continuous",
        exposure_type="binary",
        contrast="difference",
        x=1.0,
        x_prime=0.0,
        omega_c=500.0,
        omega_b=0.5,
        mc3_iterations=2000,
        variance_method="eif",
        bootstrap_B=200,
        random_state=None,
    ):
        self.outcome_type = outcome_type
        self.exposure_type = exposure_type
        self.contrast = contrast
        self.x = x
        self.x_prime = x_prime
        self.omega_c = omega_c
        self.omega_b = omega_b
        self.mc3_iterations = mc3_iterations
        self.variance_method = variance_method
        self.bootstrap_B = bootstrap_B
        self.random_state = random_state

    def config(self) -> GbceeConfig:
        return GbceeConfig(
            omega_c=self.omega_c,
            omega_b=self.omega_b,
            mc3_iterations=self.mc3_iterations,
            variance_method=self.variance_method,
            bootstrap_B=self.bootstrap_B,
            contrast=self._contrast(),
            seed=self.random_state,
        )

    def fit(self, X, y, exposure):
        cfg = self.config()
        data = self._dataset(X, y, exposure)
        self.result_ = estimate(data, cfg)
        self._store(self.result_.delta_hat, self.result_.variance)
        self.inclusion_probs_ = self.result_.inclusion_probs_outcome
        self.exposure_inclusion_probs_ = self.result_.inclusion_probs_exposure
        return self


class _FixedSetEstimator(_EffectEstimator):
    _method = None

    def __init__(self, adjustment="full", outcome_type="continuous", contrast="difference"):
        self.adjustment = adjustment
        self.outcome_type = outcome_type
        self.contrast = contrast

    exposure_type = "binary"
    x = 1.0
    x_prime = 0.0

    def fit(self, X, y, exposure):
        data = self._dataset(X, y, exposure)
        mask = resolve_adjustment(self.adjustment, data.M, data.covariate_names)
        self.adjustment_set_ = AdjustmentSet(tuple(bool(b) for b in mask))
        res = type(self)._method(data, self.adjustment_set_, self._contrast())
        self._store(res.delta_hat, res.variance)
        return self


class GFormula(_FixedSetEstimator):
    """Parametric g-formula with a fixed adjustment set (``"full"``, ``"none"``, indices or names).

    ``variance_`` is the HC0 sandwich variance for a continuous outcome and
    ``None`` for a binary outcome.
    """

    _method = staticmethod(benchmarks.gformula)


class AIPW(_FixedSetEstimator):
    """Augmented inverse probability weighting with a fixed adjustment set."""

    _method = staticmethod(benchmarks.aipw)
