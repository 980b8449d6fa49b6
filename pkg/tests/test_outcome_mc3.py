import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from gbcee.data import Dataset
from gbcee.exceptions import EstimationError
from gbcee.glm import Family, fit_glm, log_marginal_bic
from gbcee.model_space import AdjustmentSet, PriorConfig, integrated_prior_component
from gbcee.outcome_mc3 import ChainState, ModelRecord, OutcomeModelSpace, mh_log_ratio, posterior_weights, run_chain

from conftest import confounded_binary


def prior_config(data, omega=500.0):
    sigma_y = 1.0 if data.outcome_type.value == "binary" else float(data.y.std())
    return PriorConfig(omega * math.sqrt(data.n), data.U.std(axis=0), sigma_y)


def oracle_log_posterior(data, pi, cfg):
    """Brute force: explicit augmented fits for every excluded covariate, no shared code paths."""
    family = Family.BERNOULLI if data.outcome_type.value == "binary" else Family.GAUSSIAN
    out = {}
    for bits in itertools.product((0, 1), repeat=data.M):
        s = AdjustmentSet(bits)
        fit = fit_glm(np.column_stack([np.ones(data.n), data.x, data.U[:, s.mask]]), data.y, family)
        lp = log_marginal_bic(fit, data.n)
        for m in range(data.M):
            bigger = s if bits[m] else s.flip(m)
            cols = np.flatnonzero(bigger.mask)
            aug = fit_glm(np.column_stack([np.ones(data.n), data.x, data.U[:, cols]]), data.y, family)
            k = 2 + int(np.flatnonzero(cols == m)[0])
            comp = integrated_prior_component(aug.coefficients[k], aug.standard_errors[k], pi[m], m, bits[m], cfg)
            lp += math.log(comp)
        out[s] = lp
    return out


def normalise(logs: dict):
    keys = list(logs)
    v = np.array([logs[k] for k in keys])
    return dict(zip(keys, np.exp(v - logsumexp(v))))


def total_variation(p: dict, q: dict):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@pytest.fixture
def data3(rng):
    return confounded_binary(300, rng)


class TestRatio:
    def test_identical_model_is_zero(self, data3):
        space = OutcomeModelSpace(data3, np.full(3, 0.5), prior_config(data3))
        s = AdjustmentSet((1, 0, 1))
        assert mh_log_ratio(space, s, s) == 0.0

    def test_no_exposure_information_is_pure_bic(self, data3):
        space = OutcomeModelSpace(data3, np.zeros(3), prior_config(data3))
        a, b = AdjustmentSet((1, 0, 0)), AdjustmentSet((1, 1, 0))
        want = space.record(b).log_marginal - space.record(a).log_marginal
        assert mh_log_ratio(space, b, a) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("outcome", ["continuous", "binary"])
    def test_cycle_consistency(self, rng, outcome):
        d = confounded_binary(400, rng, outcome=outcome)
        d = Dataset(d.y, d.x, d.U[:, :2], d.outcome_type, d.exposure_type)
        space = OutcomeModelSpace(d, np.array([0.9, 0.3]), prior_config(d))
        cycle = [AdjustmentSet(b) for b in ((0, 0), (1, 0), (1, 1), (0, 1), (0, 0))]
        total = sum(mh_log_ratio(space, b, a) for a, b in zip(cycle, cycle[1:]))
        assert math.exp(total) == pytest.approx(1.0, abs=1e-10)

    def test_two_flips_rejected(self, data3):
        space = OutcomeModelSpace(data3, np.full(3, 0.5), prior_config(data3))
        with pytest.raises(ValueError):
            mh_log_ratio(space, AdjustmentSet((1, 1, 0)), AdjustmentSet((0, 0, 0)))

    def test_flipped_terms_use_one_component(self, data3):
        pi = np.array([0.9, 0.2, 0.7])
        cfg = prior_config(data3)
        space = OutcomeModelSpace(data3, pi, cfg, prior_terms="flipped")
        a, b = AdjustmentSet((0, 1, 0)), AdjustmentSet((1, 1, 0))
        rb = space.record(b)
        comp = lambda bit: integrated_prior_component(rb.delta_tilde[0], rb.delta_se[0], pi[0], 0, bit, cfg)
        want = rb.log_marginal - space.record(a).log_marginal + math.log(comp(1)) - math.log(comp(0))
        assert mh_log_ratio(space, b, a) == pytest.approx(want, abs=1e-12)

    def test_invalid_prior_terms(self, data3):
        with pytest.raises(ValueError):
            OutcomeModelSpace(data3, np.full(3, 0.5), prior_config(data3), prior_terms="some")

    def test_wrong_pi_length(self, data3):
        with pytest.raises(ValueError):
            OutcomeModelSpace(data3, np.full(2, 0.5), prior_config(data3))


class TestAugmentedCoefficients:
    @pytest.mark.parametrize("outcome", ["continuous", "binary"])
    def test_match_explicit_fits(self, rng, outcome):
        d = confounded_binary(500, rng, outcome=outcome)
        space = OutcomeModelSpace(d, np.full(3, 0.6), prior_config(d))
        s = AdjustmentSet((0, 1, 0))
        rec = space.record(s)
        family = Family.BERNOULLI if outcome == "binary" else Family.GAUSSIAN
        for m, cols in ((0, [0, 1]), (2, [1, 2])):
            fit = fit_glm(np.column_stack([np.ones(d.n), d.x, d.U[:, cols]]), d.y, family)
            k = 2 + cols.index(m)
            assert rec.delta_tilde[m] == pytest.approx(fit.coefficients[k], rel=1e-6, abs=1e-9)
            # SEs come from the last IRLS factorisation, so warm and cold starts agree to the IRLS tolerance
            assert rec.delta_se[m] == pytest.approx(fit.standard_errors[k], rel=1e-4)
        assert rec.delta_tilde[1] == pytest.approx(rec.fit.coefficients[2])


class TestChain:
    def test_bic_bma_oracle(self, data3):
        cfg = PriorConfig(0.0, data3.U.std(axis=0), float(data3.y.std()))
        space = OutcomeModelSpace(data3, np.zeros(3), cfg)
        state = run_chain(space, 2000, AdjustmentSet.empty(3), rng_seed=1)
        got = dict(posterior_weights(state))
        assert len(got) >= 6
        bic = {}
        for bits in itertools.product((0, 1), repeat=3):
            mask = np.array(bits, dtype=bool)
            fit = fit_glm(np.column_stack([np.ones(data3.n), data3.x, data3.U[:, mask]]), data3.y)
            bic[AdjustmentSet(bits)] = log_marginal_bic(fit, data3.n)
        want = normalise(bic)
        # models the chain never proposed carry negligible mass
        for s, p in want.items():
            assert got.get(s, 0.0) == pytest.approx(p, abs=1e-10)

    @pytest.mark.parametrize("outcome", ["continuous", "binary"])
    def test_matches_enumeration_with_prior(self, rng, outcome):
        d = confounded_binary(400, rng, outcome=outcome)
        pi = np.array([0.95, 0.1, 0.8])
        cfg = prior_config(d)
        state = run_chain(OutcomeModelSpace(d, pi, cfg), 10_000, AdjustmentSet.empty(3), rng_seed=2)
        got = dict(posterior_weights(state))
        want = normalise(oracle_log_posterior(d, pi, cfg))
        assert total_variation(got, want) < 0.02

    def test_visit_frequencies_match_posterior(self, data3):
        # the chain itself (not only the visited-support normalisation) targets the posterior
        pi = np.array([0.6, 0.4, 0.5])
        cfg = PriorConfig(2.0, data3.U.std(axis=0), float(data3.y.std()))
        space = OutcomeModelSpace(data3, pi, cfg)
        want = normalise(oracle_log_posterior(data3, pi, cfg))
        counts = {}
        current = AdjustmentSet.empty(3)
        r = np.random.default_rng(3)
        for _ in range(20_000):
            cand = current.flip(int(r.integers(3)))
            if math.log(r.random()) < mh_log_ratio(space, cand, current):
                current = cand
            counts[current] = counts.get(current, 0) + 1
        freq = {k: v / 20_000 for k, v in counts.items()}
        assert total_variation(freq, want) < 0.05

    def test_deterministic(self, data3):
        pi = np.full(3, 0.5)
        runs = []
        for _ in range(2):
            state = run_chain(OutcomeModelSpace(data3, pi, prior_config(data3)), 300, AdjustmentSet.empty(3), 9)
            runs.append((state.current, state.n_accepted, posterior_weights(state)))
        assert runs[0] == runs[1]

    def test_reference_invariance(self, data3):
        pi = np.array([0.9, 0.5, 0.2])
        a = run_chain(OutcomeModelSpace(data3, pi, prior_config(data3)), 3000, AdjustmentSet.empty(3), 4)
        b = run_chain(OutcomeModelSpace(data3, pi, prior_config(data3)), 3000, AdjustmentSet.full(3), 5)
        wa, wb = dict(posterior_weights(a)), dict(posterior_weights(b))
        for s in set(wa) | set(wb):
            assert wa.get(s, 0.0) == pytest.approx(wb.get(s, 0.0), abs=1e-10)

    def test_no_covariates(self, rng):
        d = confounded_binary(100, rng)
        d = Dataset(d.y, d.x, np.empty((100, 0)))
        state = run_chain(OutcomeModelSpace(d, np.zeros(0), PriorConfig(1.0, np.ones(0))), 10, AdjustmentSet.empty(0))
        assert posterior_weights(state) == [(AdjustmentSet.empty(0), 1.0)]

    def test_failed_start_raises(self, rng):
        u = np.linspace(-1, 1, 40)
        y = (u > 0).astype(float)
        x = rng.integers(0, 2, 40).astype(float)
        d = Dataset(y, x, u[:, None], "binary")
        space = OutcomeModelSpace(d, np.array([0.5]), PriorConfig(1.0, np.ones(1)))
        with pytest.raises(EstimationError):
            run_chain(space, 10, AdjustmentSet.full(1))

    def test_bad_iterations(self, data3):
        space = OutcomeModelSpace(data3, np.full(3, 0.5), prior_config(data3))
        with pytest.raises(ValueError):
            run_chain(space, 0, AdjustmentSet.empty(3))


class TestPosteriorWeights:
    def record(self, s, lr):
        return ModelRecord(s, None, 0.0, np.zeros(1), np.zeros(1), 0.0, lr)

    def test_single_model(self):
        s = AdjustmentSet((1,))
        state = ChainState(s, s, {s: self.record(s, 0.0)})
        assert posterior_weights(state) == [(s, 1.0)]

    def test_one_to_three(self):
        a, b = AdjustmentSet((0,)), AdjustmentSet((1,))
        state = ChainState(a, a, {a: self.record(a, 0.0), b: self.record(b, math.log(3))})
        w = dict(posterior_weights(state))
        assert w[a] == pytest.approx(0.25) and w[b] == pytest.approx(0.75)

    def test_empty_raises(self):
        s = AdjustmentSet((0,))
        with pytest.raises(ValueError):
            posterior_weights(ChainState(s, s, {}))
