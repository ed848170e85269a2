import math

import numpy as np
import pytest

from _oracles import autocov_loop, lrcov_loop, lrv_qs_loop, lrv_standard_loop, qs_kernel_closed
from seqmon.core import (
    BandwidthTooLarge,
    DegenerateComponent,
    LagTooLarge,
    LrvConfig,
    ObservationMatrix,
)
from seqmon.lrv import (
    autocov,
    correlation_matrix,
    estimate_lrv,
    lrcov,
    lrv_qs,
    lrv_standard,
    qs_kernel,
)

ALT = ObservationMatrix([1.0, -1.0, 1.0, -1.0])


class TestAutocov:
    def test_constant(self):
        assert autocov(ObservationMatrix([1.0] * 4), 0, 1) == 0.0

    def test_alternating_denom_m(self):
        assert autocov(ALT, 1, 1, denom="m") == pytest.approx(-0.75, abs=1e-15)

    def test_alternating_denom_m_minus_t(self):
        assert autocov(ALT, 1, 1, denom="m_minus_t") == pytest.approx(-1.0, abs=1e-15)

    def test_lag_too_large(self):
        with pytest.raises(LagTooLarge):
            autocov(ALT, 4, 1)

    @pytest.mark.parametrize("t", [0, 1, 5, 19])
    @pytest.mark.parametrize("denom", ["m", "m_minus_t"])
    def test_matches_loop(self, t, denom):
        x = np.random.default_rng(t).standard_normal(20)
        got = autocov(ObservationMatrix(x), t, 1, denom=denom)
        assert got == pytest.approx(autocov_loop(x.tolist(), t, denom), rel=1e-12, abs=1e-14)


class TestStandard:
    def test_constant_column_is_degenerate(self):
        with pytest.raises(DegenerateComponent) as e:
            lrv_standard(ObservationMatrix(np.full(8, 3.0)), 1, 1.0)
        assert e.value.components == [1]

    def test_alternating_is_floored(self):
        # phi_0 = 1 and phi_1 = -7/7 = -1 by direct summation, so the raw
        # estimate is 1 - 2 = -1 and the 5% floor of the sample variance applies
        x = np.array([1.0, -1.0] * 4)
        raw = lrv_standard_loop(x.tolist(), 1)
        assert raw == pytest.approx(-1.0)
        assert lrv_standard(ObservationMatrix(x), 1, 1.0) == pytest.approx(0.05)
        est = estimate_lrv(ObservationMatrix(x), LrvConfig("standard_truncated", 1.0))
        assert est.floored == {1}
        assert est.sigma2[0] == pytest.approx(0.05)

    def test_zero_two(self):
        x = [0.0, 2.0, 0.0, 2.0]
        raw = lrv_standard_loop(x, 1)
        expected = raw if raw > 0 else 0.05 * autocov_loop(x, 0, "m")
        assert lrv_standard(ObservationMatrix(x), 1, 1.0) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_double_loop(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(10, 201))
        x = np.cumsum(rng.standard_normal(m)) * 0.1 + rng.standard_normal(m)
        H = float(rng.uniform(0.5, 6))
        raw = lrv_standard_loop(x.tolist(), int(H))
        got = lrv_standard(ObservationMatrix(x), 1, H)
        if raw > 0:
            assert got == pytest.approx(raw, rel=1e-12)

    def test_bandwidth_too_large(self):
        with pytest.raises(BandwidthTooLarge):
            lrv_standard(ALT, 1, 4.0)

    def test_vectorised_agrees(self):
        rng = np.random.default_rng(3)
        X = ObservationMatrix(rng.standard_normal((60, 5)))
        est = estimate_lrv(X, LrvConfig("standard_truncated"))
        for h in range(1, 6):
            assert est.sigma2[h - 1] == pytest.approx(lrv_standard(X, h, math.log10(60)), rel=1e-12)


class TestQS:
    def test_k0(self):
        assert qs_kernel(0.0) == 1.0

    def test_golden_value(self):
        # z = pi at x = 5/6, so k = 25/(12 pi^2 (25/36)) * (0 + 1) = 3/pi^2
        assert qs_kernel(5 / 6) == pytest.approx(3 / math.pi**2, rel=1e-14)
        assert qs_kernel(5 / 6) == pytest.approx(0.30396355092701327, rel=1e-14)

    def test_even_and_bounded(self):
        x = np.linspace(-10, 10, 2001)
        k = qs_kernel(x)
        assert np.array_equal(k, qs_kernel(-x))
        assert np.all(np.abs(k) <= 1.0)

    def test_small_argument_is_continuous(self):
        xs = [1e-8, 1e-6, 1e-4, 5e-4, 1e-3, 2e-3]
        for x in xs:
            assert qs_kernel(x) == pytest.approx(qs_kernel_closed(x) if x > 1e-4 else 1.0, abs=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(40) + 0.5 * np.sin(np.arange(40))
        H = float(rng.uniform(0.7, 4))
        raw = lrv_qs_loop(x.tolist(), H)
        got = lrv_qs(ObservationMatrix(x), 1, H)
        assert got == pytest.approx(raw, rel=1e-10)
        est = estimate_lrv(ObservationMatrix(x), LrvConfig(bandwidth=H))
        assert est.sigma2[0] == pytest.approx(raw, rel=1e-10)

    @pytest.mark.slow
    def test_iid_monte_carlo_band(self):
        rng = np.random.default_rng(11)
        vals = np.array([
            estimate_lrv(ObservationMatrix(rng.standard_normal((500, 1))), LrvConfig()).sigma2[0]
            for _ in range(200)
        ])
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - 1.0) < 3 * se


class TestLrcov:
    def test_identical_columns_equal_lrv(self):
        x = np.random.default_rng(0).standard_normal(30)
        X = ObservationMatrix(np.column_stack([x, x]))
        assert lrcov(X, 1, 2, 2.0) == pytest.approx(lrv_standard_loop(x.tolist(), 2), rel=1e-12)

    def test_orthogonal_columns(self):
        a = [1.0, -1.0, 1.0, -1.0]
        b = [1.0, 1.0, -1.0, -1.0]
        X = ObservationMatrix(np.column_stack([a, b]))
        assert lrcov(X, 1, 2, 1.0) == pytest.approx(lrcov_loop(a, b, 1), abs=1e-15)

    def test_symmetry(self):
        X = ObservationMatrix(np.random.default_rng(5).standard_normal((50, 3)))
        assert lrcov(X, 1, 3, 3.0) == pytest.approx(lrcov(X, 3, 1, 3.0), rel=1e-13)

    def test_bandwidth_too_large(self):
        with pytest.raises(BandwidthTooLarge):
            lrcov(ALT, 1, 1, 10.0)


class TestCorrelation:
    def test_perfectly_correlated(self):
        x = np.random.default_rng(1).standard_normal(100)
        rho = correlation_matrix(ObservationMatrix(np.column_stack([x, x])), LrvConfig())
        assert rho.rho[0, 1] == pytest.approx(1.0, abs=1e-10)
        assert rho.rho[0, 1] < 1.0

    def test_independent(self):
        X = ObservationMatrix(np.random.default_rng(2).standard_normal((500, 6)))
        rho = correlation_matrix(X, LrvConfig()).rho
        off = rho[~np.eye(6, dtype=bool)]
        assert np.all(np.abs(off) < 0.2)
        assert np.array_equal(rho, rho.T)
        assert np.all(np.diag(rho) == 1.0)

    def test_d1(self):
        X = ObservationMatrix(np.random.default_rng(3).standard_normal(50))
        assert correlation_matrix(X, LrvConfig()).rho.tolist() == [[1.0]]

    @pytest.mark.parametrize("method", ["standard_truncated", "quadratic_spectral"])
    def test_matrix_matches_pairwise(self, method):
        rng = np.random.default_rng(4)
        X = ObservationMatrix(rng.standard_normal((40, 3)) + rng.standard_normal((40, 1)))
        cfg = LrvConfig(method, bandwidth=2.5)
        rho = correlation_matrix(X, cfg).rho
        s = estimate_lrv(X, cfg).sigma
        if method == "standard_truncated":
            g = lrcov(X, 1, 2, 2.5)
        else:
            a = X.values[:, 0] - X.values[:, 0].mean()
            b = X.values[:, 1] - X.values[:, 1].mean()
            g = sum(
                qs_kernel_closed(t / 2.5)
                * sum(a[i] * b[i - t] for i in range(40) if 0 <= i - t < 40) / 40
                for t in range(-39, 40)
            )
        assert rho[0, 1] == pytest.approx(g / (s[0] * s[1]), rel=1e-10)

    def test_degenerate_lists_components(self):
        X = np.random.default_rng(0).standard_normal((20, 4))
        X[:, 1] = 2.0
        X[:, 3] = -1.0
        with pytest.raises(DegenerateComponent) as e:
            correlation_matrix(ObservationMatrix(X), LrvConfig())
        assert e.value.components == [2, 4]


def test_only_stable_rows_matter():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((80, 2))
    a = estimate_lrv(ObservationMatrix(X[:40]), LrvConfig())
    X[40:] += 100.0
    b = estimate_lrv(ObservationMatrix(X[:40]), LrvConfig())
    assert np.array_equal(a.sigma2, b.sigma2)


def test_small_m_allows_zero_truncation():
    # log10(5) < 1, so only the lag-0 term survives
    x = np.random.default_rng(0).standard_normal(5)
    est = estimate_lrv(ObservationMatrix(x), LrvConfig("standard_truncated"))
    assert est.sigma2[0] == pytest.approx(autocov_loop(x.tolist(), 0, "m"), rel=1e-12)
