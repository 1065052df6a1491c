import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbos.conjugate import (
    DataSummary,
    NormalGammaParams,
    credible_interval_length,
    exact_rehearsal_variance,
    posterior_update,
    student_t_quantile,
    summarize,
)
from pbos.rehearsal import (
    CilDistribution,
    RehearsalConfig,
    percentile,
    prefix_posterior_cils,
    run_rehearsal,
)

FLAT = NormalGammaParams(0.0, 1.0, 20.0, 1.0)
CENTRAL = NormalGammaParams(0.0, 10.0, 1.0, 10.0)


class TestConfig:
    def test_dense_sizes(self):
        cfg = RehearsalConfig.dense(5, m=10)
        assert cfg.sizes == (1, 2, 3, 4, 5)

    def test_invalid_m(self):
        with pytest.raises(ValueError):
            RehearsalConfig(sizes=(1, 2), m=1)

    def test_sizes_must_increase(self):
        with pytest.raises(ValueError):
            RehearsalConfig(sizes=(2, 2), m=10)
        with pytest.raises(ValueError):
            RehearsalConfig(sizes=(), m=10)


class TestRunRehearsal:
    def test_shape_contract(self):
        cfg = RehearsalConfig(sizes=(10, 50), m=50)
        post = posterior_update(FLAT, DataSummary(10, 0.0, 9.0))
        dist = run_rehearsal(post, FLAT, cfg, np.random.default_rng(3), at_count=10)
        assert dist.values.shape == (50, 2)
        for size in (10, 50):
            col = dist.column(size)
            assert col.shape == (50,)
            assert np.all(np.diff(col) >= 0)
            assert np.all(col > 0)
        assert dist.at_count == 10

    def test_unknown_size_rejected(self):
        cfg = RehearsalConfig(sizes=(10, 50), m=10)
        post = posterior_update(FLAT, DataSummary(10, 0.0, 9.0))
        dist = run_rehearsal(post, FLAT, cfg, np.random.default_rng(3))
        with pytest.raises(KeyError):
            dist.column(20)

    def test_deterministic(self):
        cfg = RehearsalConfig(sizes=(5, 20), m=64)
        post = posterior_update(CENTRAL, DataSummary(10, 0.5, 9.0))
        a = run_rehearsal(post, CENTRAL, cfg, np.random.default_rng(11))
        b = run_rehearsal(post, CENTRAL, cfg, np.random.default_rng(11))
        assert np.array_equal(a.values, b.values)

    def test_matches_exact_variance_oracle(self):
        # Invert each simulated CIL back to its variance parameter and
        # compare the sample mean against the exact chain expectation.
        data = DataSummary(20, 0.0, 19.0)
        post = posterior_update(FLAT, data)
        cfg = RehearsalConfig(sizes=(20,), m=10_000)
        dist = run_rehearsal(post, FLAT, cfg, np.random.default_rng(21))
        t_crit = student_t_quantile(0.975, FLAT.v_scale + 20)
        n1 = FLAT.n_scale + 20
        variances = (dist.column(20) / (2.0 * t_crit)) ** 2 * n1
        expected = exact_rehearsal_variance(FLAT, data, 20)
        assert np.mean(variances) == pytest.approx(expected, rel=0.02)

    def test_median_cil_decreases_with_future_size(self):
        cfg = RehearsalConfig(sizes=(10, 50), m=200)
        wins = 0
        for run in range(100):
            rng = np.random.default_rng(1000 + run)
            data = rng.normal(0.0, 1.0, 10)
            post = posterior_update(FLAT, summarize(data))
            dist = run_rehearsal(post, FLAT, cfg, rng)
            wins += dist.median(50) < dist.median(10)
        assert wins >= 95

    def test_prior_only_combination(self):
        # The simulated posteriors must combine the prior with the future
        # samples alone; any leak of collected data would break equality
        # with a direct prior+prefix update.
        rng = np.random.default_rng(5)
        samples = rng.normal(0.4, 1.3, (1, 50))
        sizes = (1, 7, 23, 50)
        cils = prefix_posterior_cils(FLAT, samples, sizes, 0.95)
        for j, k in enumerate(sizes):
            direct = credible_interval_length(
                posterior_update(FLAT, summarize(samples[0, :k])), 0.95
            )
            assert cils[0, j] == pytest.approx(direct, rel=1e-10)

    def test_prefix_requires_enough_columns(self):
        with pytest.raises(ValueError):
            prefix_posterior_cils(FLAT, np.zeros((2, 4)), (1, 5), 0.95)


class TestPercentile:
    def test_examples(self):
        assert percentile([1, 2, 3, 4, 5], 0.5) == 3
        assert percentile([1, 2, 3, 4, 5], 0.0) == 1
        assert percentile([10, 20, 30, 40], 0.25) == 17.5

    def test_extremes(self):
        values = [2.0, 3.0, 7.0, 11.0]
        assert percentile(values, 0.0) == 2.0
        assert percentile(values, 1.0) == 11.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            percentile([], 0.5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            percentile([1.0], 1.5)

    @settings(max_examples=100)
    @given(
        st.lists(st.floats(-1e9, 1e9), min_size=1, max_size=50).map(sorted),
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
    )
    def test_monotone_in_q(self, values, q1, q2):
        lo, hi = sorted((q1, q2))
        assert percentile(values, lo) <= percentile(values, hi)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=300).map(sorted))
    def test_matches_numpy_linear(self, values):
        for q in (0.1, 0.37, 0.5, 0.9):
            assert percentile(values, q) == pytest.approx(
                float(np.percentile(values, q * 100, method="linear")), rel=1e-9, abs=1e-9
            )
