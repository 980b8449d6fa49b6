"""Posterior over exposure models and marginal covariate inclusion probabilities."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._fitting import SubsetRegression
from .exceptions import EstimationError
from .glm import Family, log_marginal_bic
from .model_space import AdjustmentSet

logger = logging.getLogger(__name__)

MAX_EXACT_M = 12


@dataclass(frozen=True, eq=False)
class ExposurePosterior:
    inclusion_probs: np.ndarray
    models: tuple
    method: str
    n_failed: int = 0

    def __post_init__(self):
        probs = np.asarray(self.inclusion_probs, dtype=float)
        probs.flags.writeable = False
        object.__setattr__(self, "inclusion_probs", probs)

    @classmethod
    def from_log_scores(cls, scores: dict, M: int, method: str, n_failed=0):
        subsets = list(scores)
        logs = np.array([scores[s] for s in subsets])
        probs = np.exp(logs - logsumexp(logs))
        order = sorted(range(len(subsets)), key=lambda k: (-probs[k], str(subsets[k])))
        models = tuple((subsets[k], float(probs[k])) for k in order)
        incl = np.zeros(M)
        for subset, p in models:
            incl[subset.mask] += p
        return cls(np.clip(incl, 0.0, 1.0), models, method, n_failed)


def default_exposure_iterations(M):
    return min(5 * M * 100, 50_000)


def exposure_posterior(
    x,
    U,
    family,
    iterations=None,
    rng_seed=None,
    *,
    max_exact=MAX_EXACT_M,
    regression: SubsetRegression | None = None,
) -> ExposurePosterior:
    """Posterior ``P(alpha_x | X)`` under a uniform model prior and BIC marginal likelihoods.

    With ``M <= max_exact`` covariates all ``2**M`` exposure models are fitted.
    Otherwise an add/remove-one-covariate Metropolis chain is run for
    ``iterations`` steps (default ``min(500 * M, 50000)``) from the empty model
    and the posterior is renormalised over the distinct models it evaluated.
    Non-converged fits are left out of the support.
    """
    U = np.asarray(U, dtype=float)
    n, M = U.shape
    reg = regression if regression is not None else SubsetRegression(x, U, family)
    failed_before = reg.n_failed

    def score(subset, near=None):
        fit = reg.fit(subset, near)
        return None if fit is None else log_marginal_bic(fit, n)

    scores = {}
    if M <= max_exact:
        method = "exact_enumeration"
        previous = None
        for bits in itertools.product((False, True), repeat=M):
            subset = AdjustmentSet(bits[::-1])
            s = score(subset, previous)
            if s is not None:
                scores[subset] = s
                previous = (subset, reg.cache[subset])
    else:
        method = "mc3"
        iterations = default_exposure_iterations(M) if iterations is None else int(iterations)
        rng = np.random.default_rng(rng_seed)
        current = AdjustmentSet.empty(M)
        current_score = score(current)
        if current_score is None:
            raise EstimationError("the intercept-only exposure model failed to fit")
        scores[current] = current_score
        coords = rng.integers(0, M, size=iterations)
        log_u = np.log(rng.random(iterations))
        for m, lu in zip(coords, log_u):
            candidate = current.flip(int(m))
            s = scores.get(candidate)
            if s is None:
                s = score(candidate, (current, reg.cache[current]))
                if s is None:
                    continue
                scores[candidate] = s
            if lu < s - current_score:
                current, current_score = candidate, s
    n_failed = reg.n_failed - failed_before
    if not scores:
        raise EstimationError("every exposure model failed to fit")
    if n_failed:
        logger.warning("exposure posterior: %d non-converged exposure model(s) dropped from the support", n_failed)
    return ExposurePosterior.from_log_scores(scores, M, method, n_failed)
