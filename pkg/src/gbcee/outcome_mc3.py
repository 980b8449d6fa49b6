"""Markov chain Monte Carlo model composition over outcome models.

The chain proposes adding or removing one covariate and accepts with the
Metropolis-Hastings probability of the posterior ratio.  Each model's
unnormalised log posterior is

    log P(Y | alpha) + sum_m log Pbar_m(alpha_m)

with ``log P(Y | alpha)`` from BIC and ``Pbar_m`` the prior component of
covariate ``m`` averaged over the exposure-model posterior and over the
sampling distribution of its outcome coefficient.  The coefficient of ``m``
comes from the model itself when ``m`` is included and from the model
augmented with ``m`` otherwise.  Because every ratio is a ratio of these
per-model quantities, chained ratios do not depend on the path.

``prior_terms="flipped"`` keeps only the flipped covariate's component in
each ratio (the cheaper one-term approximation).  Those ratios are not
cycle-consistent, so a model's relative posterior is taken along the path
that first reached it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._fitting import SubsetRegression
from .data import Dataset, VariableType
from .exceptions import EstimationError
from .glm import Family, GlmFit, log_marginal_bic
from .model_space import AdjustmentSet, PriorConfig, integrated_prior_components

logger = logging.getLogger(__name__)

PRIOR_TERMS = ("all", "flipped")
# below this exposure inclusion probability a component is exactly uninformative
_PI_NEGLIGIBLE = 1e-12


@dataclass
class ModelRecord:
    subset: AdjustmentSet
    fit: GlmFit
    log_marginal: float
    delta_tilde: np.ndarray
    delta_se: np.ndarray
    log_prior: float
    log_rel_posterior: float = 0.0


@dataclass
class ChainState:
    reference: AdjustmentSet
    current: AdjustmentSet
    visited: dict = field(default_factory=dict)
    n_proposed: int = 0
    n_accepted: int = 0
    n_failed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0


class OutcomeModelSpace:
    """Outcome models ``g(E[Y]) = d0 + beta X + sum_m alpha_m d_m U_m`` and their posterior scores."""

    def __init__(self, data: Dataset, pi, cfg: PriorConfig, prior_terms="all"):
        if prior_terms not in PRIOR_TERMS:
            raise ValueError(f"prior_terms must be one of {PRIOR_TERMS}")
        self.data = data
        self.pi = np.asarray(pi, dtype=float)
        if self.pi.shape != (data.M,):
            raise ValueError("need one exposure inclusion probability per covariate")
        self.cfg = cfg
        self.prior_terms = prior_terms
        family = Family.BERNOULLI if data.outcome_type is VariableType.BINARY else Family.GAUSSIAN
        self.regression = SubsetRegression(data.y, data.U, family, fixed=data.x)
        self.records: dict = {}
        self.n_augment_failed = 0

    @property
    def M(self):
        return self.data.M

    @property
    def family(self):
        return self.regression.family

    def fit(self, subset, near=None):
        return self.regression.fit(subset, near)

    def _augmented(self, subset, fit):
        """Coefficient and SE of each covariate in the model that includes it."""
        M = self.M
        delta = np.zeros(M)
        se = np.zeros(M)
        inc = subset.indices
        if inc.size:
            pos = self.regression.n_fixed + np.arange(inc.size)
            delta[inc] = fit.coefficients[pos]
            se[inc] = fit.standard_errors[pos]
        excluded = np.flatnonzero(~subset.mask & (self.pi > _PI_NEGLIGIBLE))
        if not excluded.size:
            return delta, se
        if self.family is Family.GAUSSIAN:
            # Frisch-Waugh-Lovell: one extra column at a time, all at once
            D = self.regression.design(subset)
            Ue = self.data.U[:, excluded]
            R = Ue - D @ (fit.cov_unscaled @ (D.T @ Ue))
            resid = self.data.y - fit.fitted_values
            rr = np.einsum("ij,ij->j", R, R)
            re = R.T @ resid
            rss = float(resid @ resid)
            with np.errstate(divide="ignore", invalid="ignore"):
                d = re / rr
                sigma2 = np.maximum(rss - re * d, np.finfo(float).tiny) / self.data.n
                s = np.sqrt(sigma2 / rr)
            ok = rr > 1e-12 * np.einsum("ij,ij->j", Ue, Ue)
            delta[excluded] = np.where(ok, d, 0.0)
            se[excluded] = np.where(ok, s, np.inf)
            self.n_augment_failed += int((~ok).sum())
        else:
            for m in excluded:
                bigger = subset.flip(int(m))
                aug = self.regression.fit(bigger, (subset, fit))
                if aug is None:
                    delta[m], se[m] = 0.0, np.inf
                    self.n_augment_failed += 1
                    continue
                k = self.regression.coefficient_of(aug, bigger, int(m))
                delta[m], se[m] = aug.coefficients[k], aug.standard_errors[k]
        return delta, se

    def _components(self, bits, delta, se):
        uninformative = ~np.isfinite(se)
        pi = np.where(uninformative, 0.0, self.pi)
        se = np.where(uninformative, 0.0, se)
        return integrated_prior_components(
            delta, se, pi, bits, self.cfg.scale, self.cfg.integration, self.cfg.quadrature_nodes
        )

    def record(self, subset, near=None) -> ModelRecord | None:
        """Score ``subset`` (memoised); ``None`` if its outcome model failed to fit."""
        rec = self.records.get(subset)
        if rec is not None:
            return rec
        if subset in self.records:
            return None
        fit = self.fit(subset, near)
        if fit is None:
            self.records[subset] = None
            return None
        delta, se = self._augmented(subset, fit)
        with np.errstate(divide="ignore"):
            log_prior = float(np.sum(np.log(self._components(subset.mask, delta, se))))
        rec = ModelRecord(subset, fit, log_marginal_bic(fit, self.data.n), delta, se, log_prior)
        self.records[subset] = rec
        return rec

    def log_score(self, subset) -> float:
        rec = self.record(subset)
        return -math.inf if rec is None else rec.log_marginal + rec.log_prior

    def flipped_log_prior_ratio(self, candidate, current, m) -> float:
        """Log ratio of covariate ``m``'s prior components, coefficient from the model containing ``m``."""
        bigger = candidate if candidate.bits[m] else current
        rec = self.record(bigger)
        if rec is None:
            return -math.inf
        delta = rec.delta_tilde[m : m + 1]
        se = rec.delta_se[m : m + 1]
        pi = self.pi[m : m + 1]
        cand = integrated_prior_components(
            delta, se, pi, [candidate.bits[m]], self.cfg.scale[m], self.cfg.integration, self.cfg.quadrature_nodes
        )
        curr = integrated_prior_components(
            delta, se, pi, [current.bits[m]], self.cfg.scale[m], self.cfg.integration, self.cfg.quadrature_nodes
        )
        with np.errstate(divide="ignore"):
            return float(np.log(cand[0]) - np.log(curr[0]))


def mh_log_ratio(space: OutcomeModelSpace, candidate, current, m=None) -> float:
    """Log Metropolis-Hastings ratio ``log P(candidate | Y) - log P(current | Y)``.

    Returns ``-inf`` when the candidate's outcome model does not fit.
    """
    if candidate == current:
        return 0.0
    diff = [j for j, (a, b) in enumerate(zip(candidate.bits, current.bits)) if a != b]
    if len(diff) != 1 or (m is not None and diff[0] != m):
        raise ValueError("candidate and current must differ in exactly one covariate")
    m = diff[0]
    cand_rec = space.record(candidate, (current, space.regression.cache.get(current)))
    if cand_rec is None:
        return -math.inf
    cur_rec = space.record(current)
    if cur_rec is None:
        raise EstimationError(f"current model {current} has no valid fit")
    if space.prior_terms == "all":
        return (cand_rec.log_marginal + cand_rec.log_prior) - (cur_rec.log_marginal + cur_rec.log_prior)
    return cand_rec.log_marginal - cur_rec.log_marginal + space.flipped_log_prior_ratio(candidate, current, m)


def run_chain(space: OutcomeModelSpace, iterations, start: AdjustmentSet, rng_seed=None) -> ChainState:
    """Run the add/remove-one MC3 sampler for ``iterations`` proposals.

    Every evaluated candidate with a valid fit is recorded in ``visited`` with
    its log posterior relative to the start model.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(start) != space.M:
        raise ValueError("start set has the wrong length")
    start_rec = space.record(start)
    if start_rec is None:
        raise EstimationError(f"the starting outcome model {start} failed to fit")
    state = ChainState(reference=start, current=start)
    start_rec.log_rel_posterior = 0.0
    state.visited[start] = start_rec
    if space.M == 0:
        return state
    rng = np.random.default_rng(rng_seed)
    coords = rng.integers(0, space.M, size=iterations)
    log_u = np.log(rng.random(iterations))
    ref_score = start_rec.log_marginal + start_rec.log_prior
    current = start
    for m, lu in zip(coords, log_u):
        m = int(m)
        candidate = current.flip(m)
        state.n_proposed += 1
        ratio = mh_log_ratio(space, candidate, current, m)
        if ratio == -math.inf:
            if space.records.get(candidate) is None:
                state.n_failed += 1
            continue
        if candidate not in state.visited:
            rec = space.records[candidate]
            if space.prior_terms == "all":
                rec.log_rel_posterior = rec.log_marginal + rec.log_prior - ref_score
            else:
                rec.log_rel_posterior = state.visited[current].log_rel_posterior + ratio
            state.visited[candidate] = rec
        if lu < ratio:
            current = candidate
            state.n_accepted += 1
    state.current = current
    if state.n_failed:
        logger.warning("outcome chain: %d proposal(s) rejected because the candidate fit failed", state.n_failed)
    return state


def posterior_weights(state: ChainState) -> list:
    """Normalised posterior probabilities of the distinct visited models."""
    if not state.visited:
        raise ValueError("no visited models")
    subsets = list(state.visited)
    logs = np.array([state.visited[s].log_rel_posterior for s in subsets])
    probs = np.exp(logs - logsumexp(logs))
    return list(zip(subsets, probs.tolist()))
