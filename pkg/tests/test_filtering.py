import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosshedge import filtering, market
from crosshedge.errors import UnsupportedRegimeError


def mkt(**kw):
    base = dict(sigma_s=0.16, sigma_y=0.2, rho=0.75, lambda_s=0.5, lambda_y=0.4)
    base.update(kw)
    return market.MarketParams(**base)


class TestObservation:
    def test_zero_at_start(self):
        xi_s, xi_y = filtering.observation_from_prices(0.0, 100.0, 100.0, mkt())
        assert xi_s == 0.0 and xi_y == 0.0

    def test_time_term_only(self):
        xi_s, _ = filtering.observation_from_prices(1.0, 100.0, 100.0, mkt())
        assert xi_s == pytest.approx(0.08)  # sigma_s * t / 2

    def test_rejects_nonpositive_price(self):
        with pytest.raises(ValueError):
            filtering.observation_from_prices(0.5, -1.0, 100.0, mkt())

    def test_brownian_variance(self):
        # xi_s(t) - lambda_s t is a Brownian motion: sample variance ~ t
        p = mkt()
        arrs = market.simulate_path_arrays(p, 1.0, 8, 20_000, seed=5)
        xi_s, _ = filtering.observation_from_prices(1.0, arrs["s"][:, -1],
                                                    arrs["y"][:, -1], p)
        w = xi_s - p.lambda_s * 1.0
        se = np.sqrt(2.0 / (len(w) - 1))  # relative s.e. of a variance estimate
        assert np.var(w, ddof=1) == pytest.approx(1.0, abs=3 * se)


class TestCovarianceDecay:
    def test_values(self):
        assert filtering.covariance_decay(1.0, 1.0) == pytest.approx(0.5)
        assert filtering.covariance_decay(0.0, 0.7) == 0.7
        assert filtering.covariance_decay(5.0, 0.0) == 0.0

    @given(st.floats(0.0, 50.0), st.floats(0.0, 10.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_decay(self, t, z0):
        z_t = filtering.covariance_decay(t, z0)
        assert 0.0 <= z_t <= z0
        assert filtering.covariance_decay(t + 1.0, z0) <= z_t


def prior(**kw):
    base = dict(lambda0_s=0.5, lambda0_y=0.4, z0_s=0.05, z0_y=0.2)
    base.update(kw)
    return filtering.PriorParams(**base)


class TestFilterEstimates:
    def test_prior_at_time_zero(self):
        st0 = filtering.filter_estimates(0.0, 0.0, 0.0, prior(), rho=0.75)
        assert st0.lambda_hat_s == pytest.approx(0.5)
        assert st0.lambda_hat_y == pytest.approx(0.4)
        assert st0.z_s == pytest.approx(0.05)
        assert st0.z_y == pytest.approx(0.2)
        assert st0.c == pytest.approx(0.75 * 0.05)

    def test_direct_substitution(self):
        # z0 equal: lhat = (l0 + z0 xi)/(1 + z0 t) componentwise
        pr = prior(lambda0_s=0.5, lambda0_y=0.5, z0_s=1.0, z0_y=1.0)
        st1 = filtering.filter_estimates(1.0, 1.0, 1.0, pr, rho=0.3)
        assert st1.lambda_hat_s == pytest.approx(0.75)
        assert st1.lambda_hat_y == pytest.approx(0.75)

    def test_equal_variances_decouple(self):
        pr = prior(z0_s=0.3, z0_y=0.3)
        a = filtering.filter_estimates(0.7, 1.1, -0.4, pr, rho=0.9)
        b = filtering.filter_estimates(0.7, 1.1, 2.5, pr, rho=0.9)
        assert a.lambda_hat_s == pytest.approx(b.lambda_hat_s)

    def test_case_split_matches_formula(self):
        # z0_s > z0_y flips the (i, j) labels
        pr = prior(z0_s=0.4, z0_y=0.1)
        t, xi_s, xi_y, rho = 0.8, 0.9, -0.2, 0.6
        st2 = filtering.filter_estimates(t, xi_s, xi_y, pr, rho)
        lam_y = (pr.lambda0_y + pr.z0_y * xi_y) / (1 + pr.z0_y * t)
        w0 = (pr.z0_s - rho**2 * pr.z0_y) / (1 - rho**2)
        lam_s = (pr.lambda0_s + w0 * xi_s) / (1 + w0 * t) - rho * (
            (pr.lambda0_y + w0 * xi_y) / (1 + w0 * t) - lam_y)
        assert st2.lambda_hat_y == pytest.approx(lam_y)
        assert st2.lambda_hat_s == pytest.approx(lam_s)
        assert st2.z_y == pytest.approx(pr.z0_y / (1 + pr.z0_y * t))
        assert st2.z_s == pytest.approx(rho**2 * st2.z_y + (1 - rho**2) * st2.w)
        assert st2.c == pytest.approx(rho * st2.z_y)

    def test_perfect_correlation_unequal_variances_rejected(self):
        with pytest.raises(UnsupportedRegimeError):
            filtering.filter_estimates(0.5, 0.1, 0.1, prior(), rho=1.0)

    def test_perfect_correlation_equal_variances_ok(self):
        pr = prior(z0_s=0.2, z0_y=0.2)
        st3 = filtering.filter_estimates(0.5, 0.1, 0.1, pr, rho=1.0)
        assert np.isfinite(st3.lambda_hat_s)

    @given(st.floats(0.0, 5.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0),
           st.floats(-0.99, 0.99))
    @settings(max_examples=80, deadline=None)
    def test_covariance_cauchy_schwarz(self, t, z0_s, z0_y, rho):
        pr = prior(z0_s=z0_s, z0_y=z0_y)
        s = filtering.filter_estimates(t, 0.3, -0.1, pr, rho)
        assert s.z_s >= 0 and s.z_y >= 0 and s.w >= 0
        assert abs(s.c) <= np.sqrt(s.z_s * s.z_y) + 1e-12


class TestMprFields:
    def test_dependency_low_stock_variance(self):
        # z0_s < z0_y: stock estimate insensitive to y
        p = mkt()
        a = filtering.mpr_fields(0.5, 110.0, 90.0, prior(), p)
        b = filtering.mpr_fields(0.5, 110.0, 140.0, prior(), p)
        assert a[0] == pytest.approx(b[0])
        assert a[1] != pytest.approx(b[1])

    def test_dependency_equal_variances(self):
        p = mkt()
        pr = prior(z0_s=0.2, z0_y=0.2)
        a = filtering.mpr_fields(0.5, 90.0, 100.0, pr, p)
        b = filtering.mpr_fields(0.5, 130.0, 100.0, pr, p)
        assert a[1] == pytest.approx(b[1])  # y-estimate free of s
        assert a[0] != pytest.approx(b[0])

    def test_degenerate_prior_constant(self):
        p = mkt()
        pr = prior(z0_s=0.0, z0_y=0.0)
        lam_s, lam_y = filtering.mpr_fields(2.0, 77.0, 140.0, pr, p)
        assert lam_s == pytest.approx(pr.lambda0_s)
        assert lam_y == pytest.approx(pr.lambda0_y)


class TestTradeoff:
    def test_constant_rate_exact(self):
        times = np.linspace(0.0, 2.0, 9)
        a = filtering.accumulate_tradeoff(times, np.full(9, 0.5))
        assert np.allclose(a, 0.25 * times)

    def test_zero_rate(self):
        times = np.linspace(0.0, 1.0, 5)
        assert np.all(filtering.accumulate_tradeoff(times, np.zeros(5)) == 0.0)

    def test_unsorted_times_rejected(self):
        with pytest.raises(ValueError):
            filtering.accumulate_tradeoff([0.0, 0.5, 0.3], [1.0, 1.0, 1.0])

    def test_quadrature_order_two(self):
        # trapezoid error on a smooth integrand drops ~4x per halving
        exact = (np.exp(2.0) - 1.0) / 2.0  # int_0^1 of exp(2t) = (lam)^2 with lam=e^t
        errs = []
        for n in (64, 128, 256):
            times = np.linspace(0.0, 1.0, n + 1)
            a = filtering.accumulate_tradeoff(times, np.exp(times))
            errs.append(abs(a[-1] - exact))
        order = np.log2(errs[0] / errs[1])
        assert order > 1.9
        assert np.log2(errs[1] / errs[2]) > 1.9

    def test_nondecreasing(self):
        rng = np.random.default_rng(0)
        times = np.linspace(0.0, 1.0, 200)
        lam = rng.normal(0.5, 0.3, 200)
        a = filtering.accumulate_tradeoff(times, lam)
        assert np.all(np.diff(a) >= 0)


class TestFilterConsistency:
    def test_mse_matches_conditional_variance(self):
        # draw the true Sharpe pair from the prior, filter along simulated
        # paths, and compare the mean squared error with z_t
        p = mkt()
        pr = prior(z0_s=0.25, z0_y=0.25)
        n = 4000
        rng = np.random.default_rng(99)
        draws = rng.multivariate_normal([pr.lambda0_s, pr.lambda0_y],
                                        pr.covariance(p.rho), size=n)
        arrs = market.simulate_path_arrays(p, 1.0, 100, n, seed=100,
                                           lambdas=(draws[:, 0], draws[:, 1]))
        k = 50  # t = 0.5
        t = arrs["times"][k]
        lam_s, lam_y = filtering.mpr_fields(t, arrs["s"][:, k], arrs["y"][:, k], pr, p)
        for lam_hat, lam_true in ((lam_s, draws[:, 0]), (lam_y, draws[:, 1])):
            sq = (lam_hat - lam_true) ** 2
            z_t = filtering.covariance_decay(t, 0.25)
            se = np.std(sq, ddof=1) / np.sqrt(n)
            assert abs(np.mean(sq) - z_t) < 3 * se

    def test_full_information_reduction(self):
        # zero prior variance: estimates constant, trade-off linear in t
        p = mkt()
        pr = prior(z0_s=0.0, z0_y=0.0)
        b = market.simulate_paths(p, 1.0, 50, 1, seed=8)[0]
        states = filtering.filter_trace(b, pr, p)
        lam = np.array([s.lambda_hat_s for s in states])
        assert np.allclose(lam, pr.lambda0_s)
        a = np.array([s.a for s in states])
        assert np.allclose(a, pr.lambda0_s**2 * b.times)


class TestTraceCsv:
    def test_columns(self, tmp_path):
        p = mkt()
        b = market.simulate_paths(p, 1.0, 5, 1, seed=8)[0]
        states = filtering.filter_trace(b, prior(), p)
        out = tmp_path / "trace.csv"
        filtering.trace_to_csv(states, str(out))
        header = out.read_text().splitlines()[0]
        assert header == "t,xi_s,xi_y,lambda_hat_s,lambda_hat_y,z_s,z_y,w,c,a"

    def test_multi_path_layout(self, tmp_path):
        p = mkt()
        bundles = market.simulate_paths(p, 1.0, 5, 3, seed=8)
        traces = [filtering.filter_trace(b, prior(), p) for b in bundles]
        out = tmp_path / "traces.csv"
        filtering.traces_to_csv(traces, str(out))
        lines = out.read_text().splitlines()
        assert lines[0].startswith("path_id,")
        assert len(lines) == 1 + 3 * 6
