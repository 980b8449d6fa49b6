import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gbcee import AIPW, GBCEE, GFormula
from gbcee.benchmarks import aipw, gformula
from gbcee.core import GbceeConfig, estimate
from gbcee.exceptions import DataError
from gbcee.model_space import AdjustmentSet
from gbcee.validation import resolve_adjustment


@pytest.fixture
def frame(small_data):
    return pd.DataFrame(small_data.U, columns=["age", "bmi", "site"])


class TestGBCEE:
    def test_matches_functional_api(self, small_data):
        est = GBCEE(random_state=3, mc3_iterations=500).fit(small_data.U, small_data.y, small_data.x)
        res = estimate(small_data, GbceeConfig(mc3_iterations=500, seed=3))
        assert est.effect_ == res.delta_hat
        assert est.variance_ == res.variance
        assert est.conf_int_ == pytest.approx((res.ci_low, res.ci_high))
        np.testing.assert_array_equal(est.inclusion_probs_, res.inclusion_probs_outcome)
        assert est.n_features_in_ == 3
        assert not hasattr(est, "feature_names_in_")

    def test_dataframe_names(self, small_data, frame):
        est = GBCEE(random_state=1, mc3_iterations=200).fit(frame, small_data.y, small_data.x)
        assert list(est.feature_names_in_) == ["age", "bmi", "site"]
        assert est.result_.covariate_names == ("age", "bmi", "site")

    def test_params_and_clone(self):
        est = GBCEE(omega_c=10.0, random_state=2)
        assert est.get_params()["omega_c"] == 10.0
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert est.set_params(mc3_iterations=50).mc3_iterations == 50

    def test_summary_requires_fit(self):
        with pytest.raises(NotFittedError):
            GBCEE().summary()

    def test_summary(self, small_data):
        s = GBCEE(random_state=0, mc3_iterations=100).fit(small_data.U, small_data.y, small_data.x).summary()
        assert set(s) == {"effect", "se", "conf_int"}

    def test_rejects_nan(self, small_data):
        U = small_data.U.copy()
        U[3, 1] = np.nan
        with pytest.raises(DataError):
            GBCEE().fit(U, small_data.y, small_data.x)

    def test_rejects_length_mismatch(self, small_data):
        with pytest.raises(ValueError):
            GBCEE().fit(small_data.U, small_data.y[:-1], small_data.x)

    def test_rejects_bad_type(self, small_data):
        with pytest.raises(ValueError, match="outcome_type"):
            GBCEE(outcome_type="count").fit(small_data.U, small_data.y, small_data.x)

    def test_rejects_nonbinary_exposure(self, small_data):
        with pytest.raises(DataError):
            GBCEE().fit(small_data.U, small_data.y, small_data.y)


class TestFixedSet:
    def test_gformula_full(self, small_data):
        est = GFormula().fit(small_data.U, small_data.y, small_data.x)
        res = gformula(small_data, AdjustmentSet.full(3))
        assert est.effect_ == res.delta_hat
        assert est.variance_ == res.variance

    def test_aipw_by_name(self, small_data, frame):
        est = AIPW(adjustment=["age", "bmi"]).fit(frame, small_data.y, small_data.x)
        assert est.adjustment_set_ == AdjustmentSet((1, 1, 0))
        assert est.effect_ == aipw(small_data, AdjustmentSet((1, 1, 0))).delta_hat
        lo, hi = est.conf_int_
        assert lo < est.effect_ < hi

    def test_binary_gformula_has_no_interval(self, rng):
        from conftest import confounded_binary

        d = confounded_binary(300, rng, outcome="binary")
        est = GFormula(outcome_type="binary").fit(d.U, d.y, d.x)
        assert est.variance_ is None and est.conf_int_ is None


class TestResolveAdjustment:
    def test_keywords(self):
        assert resolve_adjustment("full", 3).tolist() == [True, True, True]
        assert resolve_adjustment("none", 2).tolist() == [False, False]

    def test_indices_and_names(self):
        assert resolve_adjustment([0, "c"], 3, ("a", "b", "c")).tolist() == [True, False, True]

    @pytest.mark.parametrize("bad", ["some", [5], ["zz"]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            resolve_adjustment(bad, 3, ("a", "b", "c"))
