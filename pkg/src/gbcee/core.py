"""Model-averaged double robust effect estimation.

:func:`estimate` runs the whole pipeline on one dataset:

1. posterior over exposure models -> covariate inclusion probabilities ``pi``;
2. MC3 over outcome models under the confounder-targeting prior;
3. a TMLE and its variance for every retained outcome model;
4. posterior mean ``sum w * delta`` and variance
   ``sum w * (V + delta**2) - mean**2`` of the effect.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from ._fitting import SubsetRegression
from .data import Dataset, VariableType
from .exceptions import EstimationError, FluctuationError, RankDeficientError, UndefinedContrastError
from .exposure_bma import ExposurePosterior, exposure_posterior
from .glm import Family
from .model_space import AdjustmentSet, PriorConfig
from .outcome_mc3 import OutcomeModelSpace, posterior_weights, run_chain
from .tmle import Contrast, ModelEstimate, bootstrap_estimates, estimate_model

logger = logging.getLogger(__name__)

Z_975 = float(norm.ppf(0.975))
VARIANCE_METHODS = ("eif", "bootstrap")
BOOTSTRAP_MIN_WEIGHT = 1e-6


@dataclass(frozen=True)
class GbceeConfig:
    """Tuning of :func:`estimate`.

    ``omega = omega_c * n ** omega_b``.  ``min_weight`` drops outcome models
    whose posterior weight is below it before the TMLE step (weights are then
    renormalised); ``exposure_iterations=None`` uses ``min(500 M, 50000)``.
    """

    omega_c: float = 500.0
    omega_b: float = 0.5
    mc3_iterations: int = 2000
    variance_method: str = "eif"
    bootstrap_B: int = 200
    contrast: Contrast = field(default_factory=Contrast)
    quadrature_nodes: int = 20
    integration: str = "exact"
    prior_terms: str = "all"
    exposure_iterations: int | None = None
    min_weight: float = 1e-8
    seed: int | None = None

    def __post_init__(self):
        if self.mc3_iterations < 1:
            raise ValueError("mc3_iterations must be >= 1")
        if not 0 < self.omega_b < 1:
            raise ValueError("omega_b must lie strictly between 0 and 1")
        if self.omega_c < 0:
            raise ValueError("omega_c must be non-negative")
        if self.variance_method not in VARIANCE_METHODS:
            raise ValueError(f"variance_method must be one of {VARIANCE_METHODS}")
        if self.bootstrap_B < 2:
            raise ValueError("bootstrap_B must be >= 2")
        if not 0 <= self.min_weight < 1:
            raise ValueError("min_weight must be in [0, 1)")

    def omega(self, n) -> float:
        return self.omega_c * n**self.omega_b

    def to_dict(self):
        out = asdict(self)
        out["contrast"] = asdict(self.contrast)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["contrast"] = Contrast(**d["contrast"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class AveragedModel:
    subset: AdjustmentSet
    weight: float
    estimate: ModelEstimate


@dataclass(frozen=True, eq=False)
class GbceeResult:
    delta_hat: float
    variance: float
    ci_low: float
    ci_high: float
    models: tuple
    inclusion_probs_outcome: np.ndarray
    inclusion_probs_exposure: np.ndarray
    diagnostics: dict
    covariate_names: tuple = ()

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {
            "delta_hat": self.delta_hat,
            "variance": self.variance,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "covariate_names": list(self.covariate_names),
            "inclusion_probs_outcome": [float(v) for v in self.inclusion_probs_outcome],
            "inclusion_probs_exposure": [float(v) for v in self.inclusion_probs_exposure],
            "models": [
                {
                    "set": str(m.subset),
                    "weight": m.weight,
                    "delta_hat": m.estimate.delta_hat,
                    "variance": m.estimate.variance,
                }
                for m in self.models
            ],
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d) -> "GbceeResult":
        models = tuple(
            AveragedModel(
                AdjustmentSet.from_string(m["set"]),
                m["weight"],
                ModelEstimate(m["delta_hat"], np.zeros(0), m["variance"]),
            )
            for m in d["models"]
        )
        return cls(
            d["delta_hat"], d["variance"], d["ci_low"], d["ci_high"], models,
            np.array(d["inclusion_probs_outcome"]), np.array(d["inclusion_probs_exposure"]),
            dict(d["diagnostics"]), tuple(d.get("covariate_names", ())),
        )


def posterior_moments(weights, deltas, variances):
    """Posterior mean and variance of the effect under model averaging.

    The variance is computed as ``sum w V + sum w (delta - mean)**2``, which
    equals ``sum w (V + delta**2) - mean**2`` and is never negative.
    """
    w = np.asarray(weights, dtype=float)
    d = np.asarray(deltas, dtype=float)
    v = np.asarray(variances, dtype=float)
    mean = float(np.sum(w * d))
    var = float(np.sum(w * v) + np.sum(w * (d - mean) ** 2))
    return mean, var


def _start_set(pi, space):
    start = AdjustmentSet(tuple(p >= 0.5 for p in pi))
    if space.log_score(start) > -math.inf:
        return start
    fallback = AdjustmentSet.empty(len(pi))
    if space.log_score(fallback) > -math.inf:
        logger.warning("start model %s has zero prior or failed to fit; starting from the empty set", start)
        return fallback
    raise EstimationError("neither the default nor the empty outcome model could be scored")


def estimate(data: Dataset, cfg: GbceeConfig | None = None) -> GbceeResult:
    """Model-averaged TMLE of the causal contrast ``cfg.contrast`` on ``data``."""
    cfg = cfg or GbceeConfig()
    n, M = data.n, data.M
    if cfg.contrast.kind == "ratio" and data.outcome_type is not VariableType.BINARY:
        raise ValueError("the ratio contrast is only available for a binary outcome")
    if M:
        sigma_u = data.U.std(axis=0)
        if np.any(sigma_u == 0):
            const = data.covariate_names[int(np.flatnonzero(sigma_u == 0)[0])]
            raise EstimationError(f"covariate {const!r} is constant")
    else:
        sigma_u = np.zeros(0)
    sigma_y = 1.0 if data.outcome_type is VariableType.BINARY else float(data.y.std())
    if sigma_y == 0:
        raise EstimationError("the outcome is constant")
    exp_seed, chain_seed, boot_seed = np.random.SeedSequence(cfg.seed).spawn(3)

    exposure_family = Family.BERNOULLI if data.exposure_type is VariableType.BINARY else Family.GAUSSIAN
    exposure_reg = SubsetRegression(data.x, data.U, exposure_family)
    expo = exposure_posterior(
        data.x, data.U, exposure_family, cfg.exposure_iterations, exp_seed, regression=exposure_reg
    )

    prior = PriorConfig(
        omega=cfg.omega(n),
        sigma_u=sigma_u if M else np.ones(0),
        sigma_y=sigma_y,
        quadrature_nodes=cfg.quadrature_nodes,
        integration=cfg.integration,
    )
    space = OutcomeModelSpace(data, expo.inclusion_probs, prior, cfg.prior_terms)
    start = _start_set(expo.inclusion_probs, space)
    state = run_chain(space, cfg.mc3_iterations, start, chain_seed)
    weighted = [(s, w) for s, w in posterior_weights(state) if w >= cfg.min_weight]

    boot_seeds = iter(boot_seed.spawn(len(weighted)))
    retained = []
    n_tmle_failed = n_boot_failed = n_truncated = n_out_of_range = 0
    for subset, w in weighted:
        seed = next(boot_seeds)
        try:
            est = estimate_model(
                data,
                subset,
                cfg.contrast,
                outcome_fit=state.visited[subset].fit,
                exposure_fit=exposure_reg.cache.get(subset),
            )
        except (EstimationError, FluctuationError, RankDeficientError, UndefinedContrastError) as exc:
            logger.warning("TMLE failed for outcome model %s: %s", subset, exc)
            n_tmle_failed += 1
            continue
        variance = est.variance
        if cfg.variance_method == "bootstrap" and w > BOOTSTRAP_MIN_WEIGHT:
            try:
                boot = bootstrap_estimates(data, subset, cfg.contrast, cfg.bootstrap_B, seed)
            except EstimationError as exc:
                logger.warning("bootstrap variance failed for outcome model %s: %s", subset, exc)
                n_tmle_failed += 1
                continue
            variance = boot.variance
            n_boot_failed += boot.n_failed
        n_truncated += est.n_truncated
        n_out_of_range += est.n_out_of_range
        retained.append((subset, w, est, variance))
    if not retained:
        raise EstimationError("no outcome model produced a TMLE")

    total = sum(w for _, w, _, _ in retained)
    weights = np.array([w / total for _, w, _, _ in retained])
    deltas = np.array([est.delta_hat for _, _, est, _ in retained])
    variances = np.array([v for _, _, _, v in retained])
    mean, var = posterior_moments(weights, deltas, variances)
    half = Z_975 * math.sqrt(var)

    order = np.argsort(-weights, kind="stable")
    models = []
    incl = np.zeros(M)
    for k in order:
        subset, _, est, v = retained[k]
        if v != est.variance:
            est = ModelEstimate(
                est.delta_hat, est.eif, v, est.epsilon, est.means,
                est.outcome_fit, est.exposure_fit, est.n_truncated, est.n_out_of_range,
            )
        models.append(AveragedModel(subset, float(weights[k]), est))
        incl[subset.mask] += weights[k]

    diagnostics = {
        "exposure_method": expo.method,
        "exposure_models": len(expo.models),
        "exposure_fit_failures": expo.n_failed,
        "omega": prior.omega,
        "chain_proposals": state.n_proposed,
        "chain_acceptance_rate": state.acceptance_rate,
        "outcome_models_visited": len(state.visited),
        "outcome_models_averaged": len(retained),
        "rejected_fits": state.n_failed,
        "augmented_fit_failures": space.n_augment_failed,
        "tmle_failures": n_tmle_failed,
        "bootstrap_failures": n_boot_failed,
        "positivity_truncations": n_truncated,
        "out_of_range_predictions": n_out_of_range,
        "dropped_weight": float(1.0 - total),
    }
    return GbceeResult(
        mean, var, mean - half, mean + half, tuple(models),
        np.clip(incl, 0.0, 1.0), expo.inclusion_probs, diagnostics, data.covariate_names,
    )
