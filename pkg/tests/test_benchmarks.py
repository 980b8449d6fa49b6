import numpy as np
import pytest
from scipy.special import expit

from gbcee.benchmarks import aipw, aipw_from_nuisance, gformula
from gbcee.data import Dataset
from gbcee.exceptions import UndefinedContrastError
from gbcee.model_space import AdjustmentSet
from gbcee.tmle import Contrast, estimate_model

from test_tmle import additive_table, standardization

FULL1 = AdjustmentSet((1,))


class TestGFormula:
    def test_outcome_equals_exposure(self, rng):
        x = np.tile([0.0, 1.0], 20)
        d = Dataset(x, x, rng.standard_normal((40, 2)))
        assert gformula(d, AdjustmentSet.empty(2)).delta_hat == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("binary_outcome", [False, True])
    def test_saturated_table(self, binary_outcome):
        d = additive_table(binary_outcome)
        want = standardization(d, 1) - standardization(d, 0)
        assert gformula(d, FULL1).delta_hat == pytest.approx(want, abs=1e-10)

    def test_continuous_is_exposure_coefficient(self, small_data):
        full = AdjustmentSet.full(3)
        D = np.column_stack([np.ones(small_data.n), small_data.x, small_data.U])
        beta, *_ = np.linalg.lstsq(D, small_data.y, rcond=None)
        res = gformula(small_data, full)
        assert res.delta_hat == pytest.approx(beta[1], abs=1e-10)
        # HC0 sandwich by hand
        e = small_data.y - D @ beta
        bread = np.linalg.inv(D.T @ D)
        want = (bread @ (D.T * e**2) @ D @ bread)[1, 1]
        assert res.variance == pytest.approx(want, rel=1e-8)

    def test_binary_outcome_has_no_variance(self, rng):
        from conftest import confounded_binary

        assert gformula(confounded_binary(300, rng, outcome="binary"), AdjustmentSet.full(3)).variance is None

    def test_needs_binary_exposure(self, rng):
        d = Dataset(rng.standard_normal(20), rng.standard_normal(20), rng.standard_normal((20, 1)), "continuous", "continuous")
        with pytest.raises(ValueError):
            gformula(d, FULL1)
        with pytest.raises(ValueError):
            aipw(d, FULL1)


class TestAipw:
    def test_horvitz_thompson_reduction(self):
        # zero outcome model: (1/n) sum X Y / g - (1/n) sum (1-X) Y / (1-g)
        y = np.array([2.0, 0.0, 1.0, 3.0, 1.0, 4.0])
        x = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        g = np.array([0.5, 0.25, 0.8, 0.5, 0.2, 0.6])
        zero = np.zeros(6)
        delta, _ = aipw_from_nuisance(y, x, g, zero, zero)
        treated = (2.0 / 0.5 + 0.0 / 0.25 + 1.0 / 0.8) / 6  # = 5.25 / 6
        control = (3.0 / 0.5 + 1.0 / 0.8 + 4.0 / 0.4) / 6  # = 17.25 / 6
        assert delta == pytest.approx(treated - control, abs=1e-12)
        assert delta == pytest.approx(-2.0, abs=1e-12)

    @pytest.mark.parametrize("binary_outcome", [False, True])
    def test_saturated_table_agrees_with_gformula_and_tmle(self, binary_outcome):
        d = additive_table(binary_outcome)
        a = aipw(d, FULL1).delta_hat
        assert a == pytest.approx(gformula(d, FULL1).delta_hat, abs=1e-10)
        assert a == pytest.approx(estimate_model(d, FULL1).delta_hat, abs=1e-10)

    def test_randomised_matches_gformula(self, rng):
        n = 20_000
        u = rng.standard_normal(n)
        x = (rng.random(n) < 0.5).astype(float)
        d = Dataset(x + u + rng.standard_normal(n), x, u[:, None])
        a, g = aipw(d, FULL1), gformula(d, FULL1)
        assert abs(a.delta_hat - g.delta_hat) < 3 * np.sqrt(a.variance)

    def test_influence_mean_zero(self, small_data):
        res = aipw(small_data, AdjustmentSet.full(3))
        assert res.variance > 0
        q = np.ones(small_data.n)
        _, infl = aipw_from_nuisance(small_data.y, small_data.x, np.full(small_data.n, 0.4), q, q)
        assert abs(infl.mean()) < 1e-12

    def test_ratio_undefined(self):
        with pytest.raises(UndefinedContrastError):
            aipw_from_nuisance(np.zeros(4), np.array([1.0, 0, 1, 0]), np.full(4, 0.5), np.zeros(4), np.zeros(4), Contrast("ratio"))


class TestDoubleRobustness:
    n = 100_000

    def test_outcome_model_wrong(self, rng):
        u = rng.standard_normal(self.n)
        x = (rng.random(self.n) < expit(u)).astype(float)
        d = Dataset(x + u + 0.5 * u**3 + rng.standard_normal(self.n), x, u[:, None])
        res = aipw(d, FULL1)
        assert abs(res.delta_hat - 1.0) < 3 * np.sqrt(res.variance)
        assert abs(gformula(d, FULL1).delta_hat - 1.0) > 5 * np.sqrt(res.variance)

    def test_exposure_model_wrong(self, rng):
        u = rng.standard_normal(self.n)
        x = (rng.random(self.n) < expit(0.6 * u + 0.5 * u**2 - 0.5)).astype(float)
        d = Dataset(x + u + rng.standard_normal(self.n), x, u[:, None])
        res = aipw(d, FULL1)
        assert abs(res.delta_hat - 1.0) < 3 * np.sqrt(res.variance)
