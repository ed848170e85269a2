import math

import numpy as np
import pytest
from scipy.optimize import brentq

from _oracles import bootstrap_triple_loop
from seqmon.bootstrap import (
    bootstrap_statistic,
    calibrate_bootstrap,
    correlation_factor,
    empirical_quantile,
    gen_replicate,
    psd_repair,
    replicate_rng,
    replicate_statistic,
)
from seqmon.core import (
    CorrelationEstimate,
    MonitorConfig,
    ShapeMismatch,
    TooFewReplicates,
)
from seqmon.detector import run_monitor
from seqmon.thresholds import range_bm_cdf, scaling, threshold


def random_corr(d, rng):
    A = rng.standard_normal((d, d + 2))
    S = A @ A.T
    s = np.sqrt(np.diag(S))
    R = S / np.outer(s, s)
    np.fill_diagonal(R, 1.0)
    return CorrelationEstimate(0.5 * (R + R.T))


class TestPsdRepair:
    def test_identity_untouched(self):
        rho, lo = psd_repair(CorrelationEstimate.identity(4))
        assert lo is None
        assert rho.is_identity()

    def test_rank_one(self):
        rho, lo = psd_repair(CorrelationEstimate(np.array([[1.0, 1.0], [1.0, 1.0]])))
        assert lo is not None and lo < 1e-10
        assert rho.rho[0, 1] < 1.0
        assert np.linalg.eigvalsh(rho.rho).min() >= 0
        assert np.all(np.diag(rho.rho) == 1.0)

    def test_indefinite(self):
        R = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1.0]])
        rho, lo = psd_repair(CorrelationEstimate(R))
        assert lo < 0
        assert np.linalg.eigvalsh(rho.rho).min() > -1e-12
        np.linalg.cholesky(rho.rho + 1e-12 * np.eye(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_valid_matrix_unchanged(self, seed):
        R = random_corr(6, np.random.default_rng(seed))
        rho, lo = psd_repair(R)
        assert lo is None
        assert np.allclose(rho.rho, R.rho, atol=1e-10, rtol=0)


class TestGenReplicate:
    def test_identity_variances(self):
        n = 4000
        Z = gen_replicate(None, n, np.random.default_rng(0), d=5).values
        assert np.all(np.abs(Z.var(axis=0) - 1) < 3 / math.sqrt(n) * math.sqrt(2))

    def test_correlated(self):
        R = CorrelationEstimate(np.array([[1, 0.9], [0.9, 1.0]]))
        Z = gen_replicate(correlation_factor(R), 10_000, np.random.default_rng(1)).values
        assert np.corrcoef(Z.T)[0, 1] == pytest.approx(0.9, abs=0.05)

    def test_deterministic(self):
        R = random_corr(3, np.random.default_rng(2))
        f = correlation_factor(R)
        a = gen_replicate(f, 50, replicate_rng(7, 3)).values
        b = gen_replicate(f, 50, replicate_rng(7, 3)).values
        assert np.array_equal(a, b)

    def test_independent_in_time(self):
        n = 5000
        Z = gen_replicate(None, n, np.random.default_rng(3), d=4).values
        for h in range(4):
            z = Z[:, h] - Z[:, h].mean()
            r1 = np.dot(z[1:], z[:-1]) / np.dot(z, z)
            assert abs(r1) < 4 / math.sqrt(n)

    def test_needs_d_for_identity(self):
        with pytest.raises(ShapeMismatch):
            gen_replicate(None, 10, np.random.default_rng(0))


class TestStatistic:
    def test_zero_panel(self):
        assert bootstrap_statistic(np.zeros((40, 3)), 20, 1) == 0.0

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            bootstrap_statistic(np.zeros((39, 3)), 20, 1)

    @pytest.mark.parametrize("seed", range(10))
    def test_triple_loop(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((40, 3))
        ref = bootstrap_triple_loop(Z, 20, 20)
        assert bootstrap_statistic(Z, 20, 1) == pytest.approx(ref, rel=1e-10)

    def test_matches_detector_with_unit_sigma(self):
        rng = np.random.default_rng(11)
        Z = rng.standard_normal((90, 5))
        res = run_monitor(Z[:30], Z[30:], 60, np.inf, sigma=np.ones(5), eliminate=False)
        assert bootstrap_statistic(Z, 30, 2) == pytest.approx(res.max_statistic, rel=1e-12)

    @pytest.mark.parametrize("n_mon", [1, 255, 256, 257, 700])
    def test_streaming_equals_materialised(self, n_mon):
        rng_a, rng_b = replicate_rng(5, 1), replicate_rng(5, 1)
        R = random_corr(4, np.random.default_rng(0))
        f = correlation_factor(R)
        m = 300
        streamed = replicate_statistic(f, 4, m, n_mon, rng_a)
        # blocks of 256 rows are drawn in sequence, the same stream split differently
        rows = []
        left = m
        while left:
            b = min(256, left)
            rows.append(rng_b.standard_normal((b, 4)) @ f.T)
            left -= b
        left = n_mon
        while left:
            b = min(256, left)
            rows.append(rng_b.standard_normal((b, 4)) @ f.T)
            left -= b
        Z = np.vstack(rows)
        assert streamed == pytest.approx(bootstrap_statistic(Z, m, n_mon / m), rel=1e-12)


class TestCalibrate:
    def test_too_few(self):
        with pytest.raises(TooFewReplicates):
            calibrate_bootstrap(CorrelationEstimate.identity(3), MonitorConfig(m=20, d=3, bootstrap_n=50))

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            calibrate_bootstrap(CorrelationEstimate.identity(2), MonitorConfig(m=20, d=3, bootstrap_n=100))

    def test_order_statistic(self):
        cfg = MonitorConfig(m=20, d=4, bootstrap_n=100, seed=3)
        bq = calibrate_bootstrap(CorrelationEstimate.identity(4), cfg)
        sc = scaling(4, 1)
        vals = np.sort(sc.a_d * (bq.statistics - sc.b_d))
        assert bq.q_value == vals[94]
        assert bq.threshold == pytest.approx(np.sort(bq.statistics)[94], rel=1e-12)

    def test_deterministic_and_thread_independent(self, monkeypatch):
        cfg = MonitorConfig(m=30, d=6, bootstrap_n=120, seed=9)
        R = random_corr(6, np.random.default_rng(4))
        a = calibrate_bootstrap(R, cfg)
        monkeypatch.setenv("SEQMON_THREADS", "3")
        b = calibrate_bootstrap(R, cfg)
        assert a.q_value == b.q_value
        assert np.array_equal(a.statistics, b.statistics)

    def test_permutation_invariance(self):
        d = 5
        R = random_corr(d, np.random.default_rng(6))
        perm = np.random.default_rng(7).permutation(d)
        Rp = CorrelationEstimate(R.rho[np.ix_(perm, perm)])
        cfg = MonitorConfig(m=40, d=d, bootstrap_n=400, seed=1)
        a = calibrate_bootstrap(R, cfg)
        b = calibrate_bootstrap(Rp, cfg)
        # same law, different random numbers: quantiles agree up to Monte Carlo error
        assert a.threshold == pytest.approx(b.threshold, abs=0.1)

    def test_statistic_ignores_column_order(self):
        Z = np.random.default_rng(8).standard_normal((80, 6))
        perm = np.random.default_rng(9).permutation(6)
        assert bootstrap_statistic(Z[:, perm], 40, 1) == bootstrap_statistic(Z, 40, 1)

    def test_d1_uses_raw_quantile(self):
        cfg = MonitorConfig(m=30, d=1, bootstrap_n=100, seed=2)
        bq = calibrate_bootstrap(CorrelationEstimate.identity(1), cfg)
        assert bq.threshold == np.sort(bq.statistics)[94]

    def test_psd_repair_reported(self):
        R = CorrelationEstimate(np.array([[1.0, 1.0], [1.0, 1.0]]))
        bq = calibrate_bootstrap(R, MonitorConfig(m=20, d=2, bootstrap_n=100))
        assert bq.psd_repair_applied
        assert bq.min_eigen_clipped is not None

    def test_exact_quantile_close_to_gumbel(self):
        # with identity correlation the m -> infinity bootstrap quantile solves F_M(c)^d = 0.95
        c = brentq(lambda x: range_bm_cdf(x, 0.5) ** 200 - 0.95, 1.0, 5.0)
        assert c == pytest.approx(threshold(200, 1, 0.05), abs=0.15)

    @pytest.mark.slow
    def test_identity_close_to_exact_quantile(self):
        # at finite m the walk misses part of the range, pulling the quantile
        # a few hundredths below its continuous limit
        c = brentq(lambda x: range_bm_cdf(x, 0.5) ** 200 - 0.95, 1.0, 5.0)
        cfg = MonitorConfig(m=500, d=200, bootstrap_n=2000, seed=0)
        bq = calibrate_bootstrap(CorrelationEstimate.identity(200), cfg)
        assert bq.threshold == pytest.approx(c, abs=0.08)
        assert bq.threshold < c


def test_empirical_quantile_convention():
    v = np.arange(1.0, 101.0)
    assert empirical_quantile(v, 0.05) == 95.0
    assert empirical_quantile(v, 0.5) == 50.0
    assert empirical_quantile(np.arange(1.0, 11.0), 0.01) == 10.0
