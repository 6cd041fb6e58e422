import math

import numpy as np
import pytest
from scipy import stats

from ewmark.baselines import (
    SumTestConfig,
    null_threshold,
    score_values,
    sequential_monitor,
    sum_score,
    threshold_table,
)
from ewmark.special import gamma_lower_quantile, gamma_upper_quantile, reg_gamma_p, reg_gamma_q

from oracles import integration_quantile

INV_E = 1.0 / math.e



class TestSumScore:
    def test_ars_single(self):
        assert sum_score([1 - INV_E], "ars") == pytest.approx(1.0, abs=1e-12)

    def test_log_pair(self):
        assert sum_score([INV_E, INV_E], "log") == pytest.approx(-2.0, abs=1e-12)

    def test_ars_y_one_is_decisive(self):
        assert sum_score([0.5, 1.0], "ars") == math.inf

    def test_log_y_zero_is_decisive(self):
        assert sum_score([0.0, 0.9], "log") == -math.inf

    def test_unknown_score(self):
        with pytest.raises(ValueError):
            sum_score([0.5], "gum")

    def test_domain_checked(self):
        with pytest.raises(ValueError):
            sum_score([1.5], "ars")

    def test_ars_null_sums_match_gamma(self):
        rng = np.random.default_rng(30)
        ys = rng.random((100_000, 100))
        sums = score_values(ys.ravel(), "ars").reshape(ys.shape).sum(axis=1)
        d = stats.kstest(sums, stats.gamma(a=100).cdf).statistic
        assert d < 0.01


class TestNullThreshold:
    def test_exponential_quantile(self):
        assert null_threshold("ars", 1, 0.05) == pytest.approx(-math.log(0.05), abs=1e-6)

    def test_exponential_unit(self):
        # P(Exp(1) >= 1) = 1/e
        assert null_threshold("ars", 1, INV_E) == pytest.approx(1.0, abs=1e-9)

    def test_log_threshold_sign(self):
        # log-score sums are negative; the threshold must be too
        thr = null_threshold("log", 10, 0.05)
        assert thr < 0.0

    def test_invalid_T(self):
        with pytest.raises(ValueError):
            null_threshold("ars", 0, 0.05)

    @pytest.mark.parametrize("score", ["ars", "log"])
    @pytest.mark.parametrize("T", [1, 5, 50, 200, 700])
    @pytest.mark.parametrize("alpha", [0.01, 0.05])
    def test_monte_carlo_calibration(self, score, T, alpha):
        # null sums simulated directly from the Gamma law as an independent oracle
        rng = np.random.default_rng(31)
        n = 100_000
        g = rng.gamma(T, size=n)
        sums = g if score == "ars" else -g
        rate = float(np.mean(sums >= null_threshold(score, T, alpha)))
        se = math.sqrt(alpha * (1 - alpha) / n)
        assert abs(rate - alpha) <= 3 * se

    @pytest.mark.parametrize("score", ["ars", "log"])
    @pytest.mark.parametrize("T", [50, 200, 700])
    def test_fixed_T_type1_through_score_path(self, score, T):
        alpha = 0.05
        rng = np.random.default_rng(32)
        n = 10_000
        ys = rng.random((n, T))
        sums = score_values(ys.ravel(), score).reshape(n, T).sum(axis=1)
        rate = float(np.mean(sums >= null_threshold(score, T, alpha)))
        se = math.sqrt(alpha * (1 - alpha) / n)
        assert abs(rate - alpha) <= 3 * se


class TestGammaRoutines:
    @pytest.mark.parametrize("shape", [1.0, 2.0, 7.5, 50.0, 700.0, 10_000.0])
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.5])
    def test_quantile_matches_integration_reference(self, shape, alpha):
        mine = gamma_upper_quantile(shape, alpha)
        ref = integration_quantile(shape, alpha)
        assert abs(mine - ref) / ref <= 1e-8

    @pytest.mark.parametrize("shape", [1.0, 3.0, 100.0])
    def test_p_q_complementary(self, shape):
        for x in (0.1, shape, 3 * shape):
            assert reg_gamma_p(shape, x) + reg_gamma_q(shape, x) == pytest.approx(1.0, abs=1e-13)

    def test_lower_quantile_consistent(self):
        q = gamma_lower_quantile(5.0, 0.05)
        assert reg_gamma_p(5.0, q) == pytest.approx(0.05, abs=1e-10)

    def test_exponential_closed_forms(self):
        # shape 1: P(1, x) = 1 - e^-x
        for x in (0.1, 1.0, 5.0):
            assert reg_gamma_p(1.0, x) == pytest.approx(1 - math.exp(-x), abs=1e-14)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            reg_gamma_p(0.0, 1.0)
        with pytest.raises(ValueError):
            reg_gamma_p(1.0, -1.0)
        with pytest.raises(ValueError):
            gamma_upper_quantile(1.0, 1.5)


class TestSequentialMonitor:
    def test_single_observation_equals_fixed(self):
        y = 0.99
        thr = null_threshold("ars", 1, 0.05)
        expect = 1 if score_values([y], "ars")[0] >= thr else None
        assert sequential_monitor([y], "ars", 0.05) == expect

    def test_empty_stream(self):
        assert sequential_monitor([], "ars", 0.05) is None

    def test_inflates_type1(self):
        # the per-prefix rule rejects far more often than alpha under the null
        rng = np.random.default_rng(33)
        alpha, T, reps = 0.05, 300, 2000
        hits = 0
        for _ in range(reps):
            hits += sequential_monitor(rng.random(T), "ars", alpha) is not None
        rate = hits / reps
        assert rate > alpha + 3 * math.sqrt(alpha * (1 - alpha) / reps)

    def test_monotone_in_length(self):
        rng = np.random.default_rng(34)
        alpha, T, reps = 0.05, 200, 1500
        firsts = []
        for _ in range(reps):
            firsts.append(sequential_monitor(rng.random(T), "ars", alpha))
        rates = [
            np.mean([f is not None and f <= t for f in firsts])
            for t in (50, 100, 200)
        ]
        assert rates[0] <= rates[1] <= rates[2]

    def test_alt_rejects_earlier_than_fixed_T(self):
        # super-uniform stream: first crossing median well before T
        rng = np.random.default_rng(35)
        T = 700
        firsts = []
        for _ in range(50):
            ys = np.sqrt(rng.random(T))  # CDF y^2: the watermark law at P=(1/2,1/2)
            f = sequential_monitor(ys, "ars", 0.05)
            assert f is not None
            firsts.append(f)
        assert np.median(firsts) < T / 4


class TestSumTestConfig:
    def test_validation(self):
        SumTestConfig("ars", 0.05)
        with pytest.raises(ValueError):
            SumTestConfig("gum", 0.05)
        with pytest.raises(ValueError):
            SumTestConfig("ars", 1.5)
        with pytest.raises(ValueError):
            SumTestConfig("ars", 0.05, mode="bogus")


def test_threshold_table_matches_pointwise():
    tab = threshold_table("ars", 20, 0.05)
    assert len(tab) == 20
    for t in (1, 7, 20):
        assert tab[t - 1] == null_threshold("ars", t, 0.05)
