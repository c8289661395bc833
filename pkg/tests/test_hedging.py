import numpy as np
import pytest

from crosshedge import euro, filtering, hedging, market


def mkt(**kw):
    base = dict(sigma_s=0.16, sigma_y=0.2, rho=0.75, lambda_s=0.5, lambda_y=0.4)
    base.update(kw)
    return market.MarketParams(**base)


PAYOFF = euro.put(100.0)
PRIOR = filtering.PriorParams(lambda0_s=0.5, lambda0_y=0.4, z0_s=0.05, z0_y=0.2)


@pytest.fixture(scope="module")
def surfaces():
    p = mkt()
    grid = euro.GridSpec.around_spot(p, 1.0, n_s=3, n_y=301, n_t=500)
    surf = euro.solve_pde_euro(PAYOFF, grid, 0.2, euro.FULL_INFO, None, p, 1.0,
                               picard=3)
    msurf = euro.marginal_price(PAYOFF, grid, euro.FULL_INFO, None, p, 1.0)
    return p, surf, msurf


def run(p, surf, msurf, policy="optimal", n_paths=800, n_steps=125, seed=21, **kw):
    return hedging.run_hedge_sim(p, None, PAYOFF, surf,
                                 hedging.HedgePolicy(policy), 1.0, n_paths,
                                 n_steps, seed, marginal_surface=msurf, **kw)


class TestBookkeeping:
    def test_policy_validation(self):
        with pytest.raises(ValueError):
            hedging.HedgePolicy("martingale")
        with pytest.raises(ValueError):
            hedging.HedgePolicy("naive", rebalance_every=0)

    def test_self_financing_ledger(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=50, keep_ledger=True)
        led = sim.ledger
        gains = np.sum(led["theta"][:, :-1] *
                       np.diff(led["s"], axis=1), axis=1)
        assert np.allclose(led["x"][:, -1] - led["x"][:, 0], gains, atol=1e-10)

    def test_initial_residual_and_paerr(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=50, keep_ledger=True)
        assert np.allclose(sim.ledger["rho"][:, 0], 0.0, atol=1e-12)
        assert np.allclose(sim.ledger["paerr"][:, 0], -1.0, atol=1e-12)

    def test_same_seed_reproducible(self, surfaces):
        p, surf, msurf = surfaces
        a = run(p, surf, msurf, n_paths=100)
        b = run(p, surf, msurf, n_paths=100)
        assert np.array_equal(a.terminal_error, b.terminal_error)

    def test_ledger_csv(self, surfaces, tmp_path):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=3, n_steps=10, keep_ledger=True)
        out = tmp_path / "ledger.csv"
        sim.ledger_to_csv(str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == "path_id,t,S,Y,theta,X,p,rho_resid,L"
        assert len(lines) == 1 + 3 * 11


class TestZeroPayoff:
    def test_all_ledgers_vanish(self):
        p = mkt()
        zero = euro.tabulated([1.0, 1000.0], [0.0, 0.0])
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=3, n_y=101, n_t=50)
        surf = euro.solve_pde_euro(zero, grid, 0.2, euro.FULL_INFO, None, p, 1.0)
        msurf = euro.marginal_price(zero, grid, euro.FULL_INFO, None, p, 1.0)
        sim = hedging.run_hedge_sim(p, None, zero, surf, hedging.HedgePolicy(),
                                    1.0, 100, 50, 3, marginal_surface=msurf)
        assert np.allclose(sim.terminal_error, 0.0, atol=1e-12)
        assert np.allclose(sim.payoff_residuals, 0.0, atol=1e-12)
        assert np.allclose(sim.fss_residuals, 0.0, atol=1e-12)
        assert np.allclose(sim.paerr_mean, -1.0, atol=1e-12)


class TestPerfectCorrelation:
    def setup_method(self):
        self.p = mkt(rho=1.0, lambda_y=0.5)
        grid = euro.GridSpec.around_spot(self.p, 1.0, n_s=3, n_y=401, n_t=500)
        self.surf = euro.solve_pde_euro(PAYOFF, grid, 0.2, euro.FULL_INFO, None,
                                        self.p, 1.0, picard=2)

    def test_residual_shrinks_with_steps(self):
        rms = []
        for steps in (25, 100):
            sim = hedging.run_hedge_sim(self.p, None, PAYOFF, self.surf,
                                        hedging.HedgePolicy("naive"), 1.0, 500,
                                        steps, 7)
            rms.append(np.sqrt(np.mean(sim.terminal_error**2)))
        # half-order convergence: 4x steps about halves the error
        assert rms[1] < 0.65 * rms[0]

    def test_paerr_constant(self):
        sim = hedging.run_hedge_sim(self.p, None, PAYOFF, self.surf,
                                    hedging.HedgePolicy(), 1.0, 300, 100, 7)
        # L stays near -1: discretization error only
        assert np.max(np.abs(sim.paerr_mean + 1.0)) < 0.05

    def test_decomposition_is_discretization_only(self):
        sims = [hedging.run_hedge_sim(self.p, None, PAYOFF, self.surf,
                                      hedging.HedgePolicy(), 1.0, 400, s, 7)
                for s in (50, 200)]
        rms = [np.sqrt(np.mean(s.payoff_residuals**2)) for s in sims]
        assert rms[1] < 0.65 * rms[0]


class TestPolicies:
    def test_optimal_beats_naive(self, surfaces):
        p, surf, msurf = surfaces
        opt = run(p, surf, msurf, "optimal", n_paths=10_000, n_steps=125)
        nai = run(p, surf, msurf, "naive", n_paths=10_000, n_steps=125)
        sd_o = np.std(opt.terminal_error, ddof=1)
        sd_n = np.std(nai.terminal_error, ddof=1)
        # non-overlapping normal-theory CIs for the standard deviations
        half_o = 3 * sd_o / np.sqrt(2 * (len(opt.terminal_error) - 1))
        half_n = 3 * sd_n / np.sqrt(2 * (len(nai.terminal_error) - 1))
        assert sd_o + half_o < sd_n - half_n

    def test_marginal_policy_runs(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, "marginal", n_paths=200)
        assert np.isfinite(sim.terminal_error).all()

    def test_naive_needs_put(self, surfaces):
        p, surf, msurf = surfaces
        capped = euro.call(100.0, cap=50.0)
        with pytest.raises(ValueError):
            hedging.run_hedge_sim(p, None, capped, surf, hedging.HedgePolicy("naive"),
                                  1.0, 10, 10, 1)

    def test_rebalance_every(self, surfaces):
        p, surf, msurf = surfaces
        dense = run(p, surf, msurf, n_paths=500)
        sparse_ = run(p, surf, msurf, n_paths=500,
                      **{})  # same config, then coarse rebalancing
        coarse = hedging.run_hedge_sim(
            p, None, PAYOFF, surf, hedging.HedgePolicy("optimal", rebalance_every=5),
            1.0, 500, 125, 21, marginal_surface=msurf)
        assert np.std(coarse.terminal_error) > np.std(dense.terminal_error)
        assert np.array_equal(dense.terminal_error, sparse_.terminal_error)


class TestChecks:
    def test_paerr_within_band(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=4000, n_steps=250)
        rep = hedging.paerr_martingale_check(sim)
        assert rep["max_abs_z"] < 3.0
        assert not rep["heavy_tailed"]

    def test_paerr_flags_heavy_tails(self):
        # strong risk aversion: the lognormal mean is not estimable and the
        # check must say so instead of reporting meaningless z-scores
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=3, n_y=201, n_t=200)
        surf = euro.solve_pde_euro(PAYOFF, grid, 0.8, euro.FULL_INFO, None, p,
                                   1.0, picard=2)
        sim = hedging.run_hedge_sim(p, None, PAYOFF, surf, hedging.HedgePolicy(),
                                    1.0, 500, 100, 3)
        rep = hedging.paerr_martingale_check(sim)
        assert rep["heavy_tailed"]

    def test_forward_utility_decreases(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=4000, n_steps=250)
        fm = sim.forward_utility_mean
        assert np.all(np.diff(fm) < 3 * np.hypot(sim.forward_utility_se[1:],
                                                 sim.forward_utility_se[:-1]))

    def test_decomposition_refinement_order(self, surfaces):
        p, surf, msurf = surfaces
        rms_p, rms_f = [], []
        for steps in (125, 250, 500):
            sim = run(p, surf, msurf, n_paths=2000, n_steps=steps)
            rms_p.append(hedging.payoff_decomposition_check(sim)["rms"])
            rms_f.append(hedging.fss_decomposition_check(sim)["rms"])
        for rms in (rms_p, rms_f):
            order = np.log2(rms[0] / rms[2]) / 2
            assert order >= 0.4

    def test_regression_single_run_near_unit(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=2000, n_steps=250)
        rep = hedging.residual_risk_sde_check(sim)
        assert rep["drift_coef"] == pytest.approx(1.0, abs=0.05)
        assert rep["diffusion_coef"] == pytest.approx(1.0, abs=0.01)
        assert rep["r_squared"] > 0.98

    def test_regression_ladder_extrapolates(self, surfaces):
        p, surf, msurf = surfaces
        sims = [run(p, surf, msurf, n_paths=2000, n_steps=s) for s in (125, 250, 500)]
        rep = hedging.residual_risk_sde_check(sims)
        assert abs(rep["drift_z"]) < 3.0
        assert abs(rep["diffusion_z"]) < 3.0
        assert len(rep["rungs"]) == 3

    def test_summary_structure(self, surfaces):
        p, surf, msurf = surfaces
        sim = run(p, surf, msurf, n_paths=200)
        s = sim.summary()
        assert set(s["terminal_error"]) == {"mean", "sd", "se", "q05", "q50", "q95"}
        assert len(s["terminal_error_histogram"]["counts"]) == 41
        assert s["paerr"]["times"] == sim.checkpoint_times.tolist()


class TestPriceRepresentation:
    def test_gamma_zero_trivial(self):
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=3, n_y=201, n_t=100)
        out = hedging.price_representation_check(
            PAYOFF, 100.0, 100.0, 0.0, euro.FULL_INFO, None, p, 1.0,
            n_paths=2000, seed=3, grid=grid)
        assert out["lhs"] == pytest.approx(out["rhs"], abs=1e-10)

    def test_full_info_agreement(self):
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=3, n_y=301, n_t=200)
        out = hedging.price_representation_check(
            PAYOFF, 100.0, 100.0, 0.5, euro.FULL_INFO, None, p, 1.0,
            n_paths=20000, seed=3, grid=grid)
        assert abs(out["z"]) < 3.0
        assert not out["inconclusive"]

    def test_partial_info_agreement(self):
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=61, n_y=61, n_t=60)
        out = hedging.price_representation_check(
            PAYOFF, 100.0, 100.0, 0.5, euro.PARTIAL_INFO, PRIOR, p, 1.0,
            n_paths=20000, seed=5, grid=grid, n_steps=120, max_rel_ci=0.1)
        # coarse-grid PDE error enters the z-score; stay within a loose band
        assert abs(out["lhs"] - out["rhs"]) < 0.05 * out["lhs"]


class TestPriorDraw:
    def test_filter_consistent_paerr(self):
        # with the truth drawn from the prior, the partial-information model
        # is exactly specified and the PAERR stays a martingale
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=41, n_y=41, n_t=100)
        surf = euro.solve_pde_euro(PAYOFF, grid, 0.2, euro.PARTIAL_INFO, PRIOR,
                                   p, 1.0, picard=2)
        sim = hedging.run_hedge_sim(p, PRIOR, PAYOFF, surf, hedging.HedgePolicy(),
                                    1.0, 2000, 100, 17, lambda_mode="prior-draw")
        rep = hedging.paerr_martingale_check(sim)
        assert rep["max_abs_z"] < 3.5

    def test_filter_consistent_decompositions_converge(self):
        # the decomposition identities hold in the filtered model too; the
        # martingale ledger is driven by the innovations increments
        p = mkt()
        grid = euro.GridSpec.around_spot(p, 1.0, n_s=61, n_y=61, n_t=200)
        surf = euro.solve_pde_euro(PAYOFF, grid, 0.2, euro.PARTIAL_INFO, PRIOR,
                                   p, 1.0, picard=2)
        msurf = euro.marginal_price(PAYOFF, grid, euro.PARTIAL_INFO, PRIOR, p, 1.0)
        rms = []
        for steps in (50, 200):
            sim = hedging.run_hedge_sim(p, PRIOR, PAYOFF, surf,
                                        hedging.HedgePolicy(), 1.0, 2000, steps,
                                        23, marginal_surface=msurf,
                                        lambda_mode="prior-draw")
            rms.append(hedging.payoff_decomposition_check(sim)["rms"])
        assert rms[1] < 0.65 * rms[0]

    def test_needs_prior(self, surfaces):
        p, surf, msurf = surfaces
        with pytest.raises(ValueError):
            hedging.run_hedge_sim(p, None, PAYOFF, surf, hedging.HedgePolicy(),
                                  1.0, 10, 10, 1, lambda_mode="prior-draw")


class TestCorrelationTable:
    def test_paper_row(self):
        rows = hedging.correlation_sensitivity([0.98])
        rho, drift_scale, diff_scale = rows[0]
        assert drift_scale == pytest.approx(0.0396, abs=1e-12)
        assert diff_scale == pytest.approx(0.199, abs=5e-4)

    def test_endpoints(self):
        rows = hedging.correlation_sensitivity([0.0, 1.0, -1.0])
        assert rows[0][1:] == (1.0, 1.0)
        assert rows[1][1:] == (0.0, 0.0)
        assert rows[2][1:] == (0.0, 0.0)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            hedging.correlation_sensitivity([1.5])

    def test_csv(self, tmp_path):
        out = tmp_path / "corr.csv"
        hedging.correlation_table_csv([0.0, 0.98], str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == "rho,one_minus_rho_sq,sqrt_one_minus_rho_sq"
        assert lines[2].startswith("0.98,0.0396,")
