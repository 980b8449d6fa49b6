import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbcee.core import GbceeConfig, GbceeResult, estimate, posterior_moments
from gbcee.data import Dataset
from gbcee.exceptions import EstimationError
from gbcee.model_space import AdjustmentSet
from gbcee.tmle import Contrast, estimate_model

from conftest import confounded_binary


class TestPosteriorMoments:
    def test_two_models(self):
        mean, var = posterior_moments([0.5, 0.5], [1.0, 3.0], [0.0, 0.0])
        assert mean == 2.0
        assert var == pytest.approx(1.0)

    def test_single_atom(self):
        assert posterior_moments([1.0], [0.7], [0.04]) == pytest.approx((0.7, 0.04))

    @settings(max_examples=200)
    @given(
        st.lists(
            st.tuples(st.floats(0.01, 1), st.floats(-10, 10), st.floats(0, 5)), min_size=1, max_size=8
        )
    )
    def test_mixture_variance_identity(self, atoms):
        w = np.array([a[0] for a in atoms])
        w /= w.sum()
        d = np.array([a[1] for a in atoms])
        v = np.array([a[2] for a in atoms])
        mean, var = posterior_moments(w, d, v)
        assert var == pytest.approx(np.sum(w * (v + d**2)) - mean**2, abs=1e-10 * (1 + np.sum(w * d**2)))
        assert var >= 0


class TestEstimate:
    def test_no_covariates_is_crude_tmle(self, rng):
        d0 = confounded_binary(300, rng)
        d = Dataset(d0.y, d0.x, np.empty((300, 0)))
        res = estimate(d, GbceeConfig(seed=1))
        crude = estimate_model(d, AdjustmentSet.empty(0))
        assert len(res.models) == 1 and res.models[0].weight == 1.0
        assert res.delta_hat == crude.delta_hat
        assert res.variance == pytest.approx(crude.variance, rel=1e-14)

    def test_single_model_variance(self, rng):
        d0 = confounded_binary(1000, rng)
        d = Dataset(d0.y, d0.x, d0.U[:, :1])
        # a weight above one half can only be held by one model
        res = estimate(d, GbceeConfig(seed=2, min_weight=0.5))
        assert len(res.models) == 1 and res.models[0].subset == AdjustmentSet((1,))
        assert res.variance == res.models[0].estimate.variance

    def test_mixture_matches_models(self, small_data):
        res = estimate(small_data, GbceeConfig(seed=3))
        w = np.array([m.weight for m in res.models])
        d = np.array([m.estimate.delta_hat for m in res.models])
        v = np.array([m.estimate.variance for m in res.models])
        assert w.sum() == pytest.approx(1.0, abs=1e-10)
        assert res.delta_hat == pytest.approx(np.sum(w * d), abs=1e-12)
        assert res.variance == pytest.approx(np.sum(w * (v + d**2)) - res.delta_hat**2, abs=1e-10)
        assert res.ci_low == pytest.approx(res.delta_hat - 1.959963984540054 * res.se)
        incl = sum(m.weight * m.subset.mask for m in res.models)
        np.testing.assert_allclose(res.inclusion_probs_outcome, incl, atol=1e-12)

    def test_targets_confounders_and_outcome_predictors(self, rng):
        d = confounded_binary(1000, rng)
        res = estimate(d, GbceeConfig(seed=4))
        incl = res.inclusion_probs_outcome
        assert incl[0] > 0.95  # confounder
        assert incl[1] > 0.95  # outcome predictor
        assert incl[2] < 0.5  # instrument
        assert abs(res.delta_hat - 1.0) < 4 * res.se

    def test_reproducible(self, small_data):
        a = estimate(small_data, GbceeConfig(seed=7))
        b = estimate(small_data, GbceeConfig(seed=7))
        assert a.to_dict() == b.to_dict()

    def test_bootstrap_variance(self, small_data):
        res = estimate(small_data, GbceeConfig(seed=5, variance_method="bootstrap", bootstrap_B=30))
        eif = estimate(small_data, GbceeConfig(seed=5))
        assert res.delta_hat == eif.delta_hat
        assert res.variance == pytest.approx(eif.variance, rel=0.6)
        assert res.variance != eif.variance

    def test_binary_outcome_ratio(self, rng):
        d = confounded_binary(600, rng, outcome="binary")
        res = estimate(d, GbceeConfig(seed=6, contrast=Contrast("ratio")))
        assert res.delta_hat > 1.0

    def test_ratio_needs_binary_outcome(self, small_data):
        with pytest.raises(ValueError):
            estimate(small_data, GbceeConfig(contrast=Contrast("ratio")))

    def test_constant_covariate(self, small_data):
        U = small_data.U.copy()
        U[:, 1] = 3.0
        with pytest.raises(EstimationError, match="U2"):
            estimate(Dataset(small_data.y, small_data.x, U))

    def test_round_trip(self, small_data):
        res = estimate(small_data, GbceeConfig(seed=8))
        back = GbceeResult.from_dict(res.to_dict())
        assert back.to_dict() == res.to_dict()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mc3_iterations": 0},
            {"omega_b": 1.0},
            {"omega_c": -1.0},
            {"variance_method": "jackknife"},
            {"bootstrap_B": 1},
            {"min_weight": 1.0},
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            GbceeConfig(**kwargs)

    def test_config_round_trip(self):
        cfg = GbceeConfig(omega_c=10.0, contrast=Contrast("ratio"), seed=3)
        assert GbceeConfig.from_dict(cfg.to_dict()) == cfg
