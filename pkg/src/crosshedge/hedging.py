"""Monte Carlo verification laboratory for hedged portfolios.

Simulates the physical-measure market, trades a hedge policy against a
priced claim, and tracks the residual risk rho = X - p, its
preference-adjusted exponential L = -exp(-gamma rho), and the martingale
ledger Lt with increments sqrt(1-rho^2) sigma_y Y p_y dW_perp whose running
quadratic variation enters the pay-off decomposition

    C(Y_T) = p(t) + int theta_H dS + (Lt_T - Lt_t) - (gamma/2)(<Lt>_T - <Lt>_t)

and, at gamma = 0, the Foellmer-Schweizer-Sondermann decomposition.  The
residual-risk SDE is verified by regressing realized increments on the
model-implied drift and diffusion terms.

Paths are independent units of work; a SimResult is a pure reduction of
per-path ledgers and is immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._io import write_csv
from .errors import InconclusiveError
from .euro import (FULL_INFO, PARTIAL_INFO, GridSpec, PayoffSpec, PriceSurface,
                   black_scholes_put_delta, marginal_price, simulate_under_mmm,
                   solve_pde_euro)
from .filtering import PriorParams, mpr_fields
from .market import MarketParams, simulate_path_arrays

NAIVE = "naive"
MARGINAL = "marginal"
OPTIMAL = "optimal"


@dataclass(frozen=True)
class HedgePolicy:
    """Trading rule for the stock position.

    'naive' prices the claim as if perfectly correlated (zero-rate
    Black-Scholes on Y) and holds (sigma_y Y)/(sigma_s S) times its delta;
    'marginal' uses the hedge field of the gamma = 0 surface; 'optimal' the
    gamma surface.  ``rebalance_every`` holds the ratio between trading and
    simulation steps.
    """

    kind: str = OPTIMAL
    rebalance_every: int = 1

    def __post_init__(self):
        if self.kind not in (NAIVE, MARGINAL, OPTIMAL):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.rebalance_every < 1:
            raise ValueError("rebalance_every must be at least 1")


@dataclass
class SimResult:
    """Aggregated ledgers from one hedging experiment."""

    times: np.ndarray
    gamma: float
    policy: HedgePolicy
    n_paths: int
    seed: int
    terminal_error: np.ndarray          # X_T - C(Y_T), policy wealth
    residual_terminal: np.ndarray       # rho_T under the optimal hedge
    payoff_residuals: np.ndarray        # pay-off decomposition residual per path
    fss_residuals: np.ndarray | None    # FSS residual per path (marginal surface)
    checkpoint_times: np.ndarray
    paerr_mean: np.ndarray
    paerr_se: np.ndarray
    forward_utility_mean: np.ndarray
    forward_utility_se: np.ndarray
    regression: dict
    off_grid_events: int
    ledger: dict | None = None

    def summary(self) -> dict:
        te = self.terminal_error
        return {
            "n_paths": int(self.n_paths),
            "seed": int(self.seed),
            "gamma": float(self.gamma),
            "policy": self.policy.kind,
            "terminal_error": _stats(te),
            "residual_terminal": _stats(self.residual_terminal),
            "payoff_decomposition_rms": float(np.sqrt(np.mean(self.payoff_residuals**2))),
            "fss_decomposition_rms": (
                None if self.fss_residuals is None
                else float(np.sqrt(np.mean(self.fss_residuals**2)))),
            "paerr": {
                "times": self.checkpoint_times.tolist(),
                "mean": self.paerr_mean.tolist(),
                "se": self.paerr_se.tolist(),
            },
            "forward_utility": {
                "times": self.checkpoint_times.tolist(),
                "mean": self.forward_utility_mean.tolist(),
                "se": self.forward_utility_se.tolist(),
            },
            "off_grid_events": int(self.off_grid_events),
            "terminal_error_histogram": _histogram(te),
        }

    def ledger_to_csv(self, path: str) -> None:
        if self.ledger is None:
            raise ValueError("simulation ran without keep_ledger=True")
        led = self.ledger
        rows = []
        for pid in range(led["s"].shape[0]):
            for k, t in enumerate(self.times):
                rows.append((pid, float(t), float(led["s"][pid, k]),
                             float(led["y"][pid, k]), float(led["theta"][pid, k]),
                             float(led["x"][pid, k]), float(led["p"][pid, k]),
                             float(led["rho"][pid, k]), float(led["paerr"][pid, k])))
        write_csv(path, ["path_id", "t", "S", "Y", "theta", "X", "p", "rho_resid", "L"],
                  rows)


def _stats(x: np.ndarray) -> dict:
    return {
        "mean": float(np.mean(x)),
        "sd": float(np.std(x, ddof=1)),
        "se": float(np.std(x, ddof=1) / np.sqrt(len(x))),
        "q05": float(np.quantile(x, 0.05)),
        "q50": float(np.quantile(x, 0.50)),
        "q95": float(np.quantile(x, 0.95)),
    }


def _histogram(x: np.ndarray, bins: int = 41) -> dict:
    counts, edges = np.histogram(x, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def run_hedge_sim(params: MarketParams, prior: PriorParams | None, payoff: PayoffSpec,
                  surface: PriceSurface, policy: HedgePolicy, horizon: float,
                  n_paths: int, n_steps: int, seed: int,
                  marginal_surface: PriceSurface | None = None,
                  lambda_mode: str = "true", checkpoints: tuple = (0.25, 0.5, 0.75, 1.0),
                  qv_mode: str = "model", keep_ledger: bool = False) -> SimResult:
    """Run one hedging experiment under the physical measure.

    The portfolio starts at X_0 = p(0, S_0, Y_0), is self-financing with
    policy-driven stock holdings, and is marked against ``surface``.  The
    residual-risk machinery always rides on the optimal hedge of ``surface``;
    the policy only changes the terminal-error ledger.  ``lambda_mode``
    'true' uses the constants in ``params``; 'prior-draw' draws per-path
    Sharpe ratios from the Gaussian prior (filter-consistent studies).
    ``qv_mode`` selects the quadratic-variation accumulator: model-implied
    integrand ('model', lower variance) or squared realized increments
    ('realized').
    """
    mode = surface.mode
    rho = params.rho
    orth = np.sqrt(max(0.0, 1.0 - rho**2))
    gamma = surface.gamma
    dt = horizon / n_steps

    lambdas = None
    rng_draw = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    if lambda_mode == "prior-draw":
        if prior is None:
            raise ValueError("prior-draw needs a prior")
        cov = prior.covariance(rho)
        draws = rng_draw.multivariate_normal(
            [prior.lambda0_s, prior.lambda0_y], cov, size=n_paths)
        lambdas = (draws[:, 0], draws[:, 1])
    elif lambda_mode != "true":
        raise ValueError("lambda_mode must be 'true' or 'prior-draw'")

    sim = simulate_path_arrays(params, horizon, n_steps, n_paths, seed, lambdas=lambdas)
    times, S, Y = sim["times"], sim["s"], sim["y"]
    dw_s, dw_perp = sim["dw_s"], sim["dw_perp"]

    p_init = np.asarray(surface.price(0.0, S[:, 0], Y[:, 0]), dtype=float)
    x_policy = p_init.copy()
    x_opt = p_init.copy()
    lt = np.full(n_paths, -1.0)           # martingale ledger, starts at L_0 = -1
    lt_qv = np.zeros(n_paths)
    lt_m = np.full(n_paths, -1.0)
    gains_m = np.zeros(n_paths)
    a_clock = np.zeros(n_paths)           # trade-off int lambda_hat_s^2
    off_grid = 0

    reg = _RegressionAccumulator()
    check_idx = sorted({min(n_steps, max(0, int(round(c * n_steps)))) for c in checkpoints})
    paerr_mean, paerr_se, fwd_mean, fwd_se = [], [], [], []

    theta_policy = np.zeros(n_paths)
    ledger = None
    if keep_ledger:
        ledger = {name: np.zeros((n_paths, n_steps + 1)) for name in
                  ("s", "y", "theta", "x", "p", "rho", "paerr")}

    for k in range(n_steps + 1):
        t = times[k]
        s_k, y_k = S[:, k], Y[:, k]
        off_grid += int(np.sum((y_k < surface.y[0]) | (y_k > surface.y[-1])))
        p_k = surface.price(t, s_k, y_k)
        rho_opt = x_opt - p_k
        paerr = -np.exp(-gamma * rho_opt)

        lam_s_k, lam_y_k = _model_mpr(t, s_k, y_k, mode, prior, params)
        if k > 0:
            a_clock = a_clock + 0.5 * (lam_s_prev**2 + lam_s_k**2) * dt

        if keep_ledger:
            for name, arr in (("s", s_k), ("y", y_k), ("x", x_opt), ("p", p_k),
                              ("rho", rho_opt), ("paerr", paerr)):
                ledger[name][:, k] = arr

        if k in check_idx:
            paerr_mean.append(np.mean(paerr))
            paerr_se.append(np.std(paerr, ddof=1) / np.sqrt(n_paths))
            fwd = -np.exp(-gamma * rho_opt + 0.5 * a_clock)
            fwd_mean.append(np.mean(fwd))
            fwd_se.append(np.std(fwd, ddof=1) / np.sqrt(n_paths))

        if k == n_steps:
            break

        # hedge ratios for the coming interval
        theta_opt = surface.hedge_ratio(t, s_k, y_k, warn=False)
        if k % policy.rebalance_every == 0:
            theta_policy = _policy_theta(policy, t, s_k, y_k, payoff, params,
                                         surface, marginal_surface, horizon,
                                         theta_opt)
        if keep_ledger:
            ledger["theta"][:, k] = theta_policy

        ds = S[:, k + 1] - s_k
        p_y_k = surface.p_y(t, s_k, y_k)
        d_big = params.sigma_y * y_k * p_y_k

        # innovations under the pricing model
        dw_s_hat, dw_perp_hat = _innovations(
            dw_s[:, k], dw_perp[:, k], sim["lam_s"], sim["lam_y"],
            lam_s_k, lam_y_k, rho, orth, dt)

        dlt = orth * d_big * dw_perp_hat
        lt = lt + dlt
        lt_qv = lt_qv + ((1 - rho**2) * d_big**2 * dt if qv_mode == "model" else dlt**2)

        if marginal_surface is not None:
            theta_m = marginal_surface.hedge_ratio(t, s_k, y_k, warn=False)
            gains_m = gains_m + theta_m * ds
            dm = params.sigma_y * y_k * marginal_surface.p_y(t, s_k, y_k)
            lt_m = lt_m + orth * dm * dw_perp_hat

        # regression ledger: realized d(rho) against model drift/diffusion
        p_next = surface.price(times[k + 1], S[:, k + 1], Y[:, k + 1])
        d_rho = (x_opt + theta_opt * ds - p_next) - rho_opt
        drift_term = 0.5 * gamma * (1 - rho**2) * d_big**2 * dt
        diff_term = -orth * d_big * dw_perp_hat
        reg.add(drift_term, diff_term, d_rho)

        x_opt = x_opt + theta_opt * ds
        x_policy = x_policy + theta_policy * ds
        lam_s_prev = lam_s_k

    c_terminal = payoff(Y[:, -1])
    gains_opt = x_opt - p_init
    payoff_resid = c_terminal - (p_init + gains_opt
                                 + (lt - (-1.0)) - 0.5 * gamma * lt_qv)
    fss_resid = None
    if marginal_surface is not None:
        m_init = np.asarray(marginal_surface.price(0.0, S[:, 0], Y[:, 0]), dtype=float)
        fss_resid = c_terminal - (m_init + gains_m + (lt_m - (-1.0)))

    return SimResult(
        times=times, gamma=gamma, policy=policy, n_paths=n_paths, seed=seed,
        terminal_error=x_policy - c_terminal,
        residual_terminal=x_opt - c_terminal,
        payoff_residuals=np.asarray(payoff_resid),
        fss_residuals=None if fss_resid is None else np.asarray(fss_resid),
        checkpoint_times=times[np.asarray(check_idx)],
        paerr_mean=np.asarray(paerr_mean), paerr_se=np.asarray(paerr_se),
        forward_utility_mean=np.asarray(fwd_mean), forward_utility_se=np.asarray(fwd_se),
        regression=reg.finalize(), off_grid_events=off_grid, ledger=ledger,
    )


def _model_mpr(t, s, y, mode, prior, params):
    if mode == FULL_INFO:
        return (np.full(np.shape(s), params.lambda_s),
                np.full(np.shape(s), params.lambda_y))
    return mpr_fields(t, s, y, prior, params)


def _innovations(dw_s, dw_perp, lam_s_true, lam_y_true, lam_s_hat, lam_y_hat,
                 rho, orth, dt):
    """Brownian increments under the observation filtration.

    The simulated physical increments carry the per-path true Sharpe ratios;
    the pricing model sees innovations dW_hat = dxi - lambda_hat dt.  At
    |rho| = 1 the orthogonal component is immaterial and returned as zero.
    """
    dxi_s = lam_s_true * dt + dw_s
    dw_s_hat = dxi_s - lam_s_hat * dt
    if orth == 0.0:
        return dw_s_hat, np.zeros_like(dw_s)
    dw_y = rho * dw_s + orth * dw_perp
    dxi_y = lam_y_true * dt + dw_y
    dw_y_hat = dxi_y - lam_y_hat * dt
    return dw_s_hat, (dw_y_hat - rho * dw_s_hat) / orth


def _policy_theta(policy, t, s, y, payoff, params, surface, marginal_surface,
                  horizon, theta_opt):
    if policy.kind == OPTIMAL:
        return theta_opt
    if policy.kind == MARGINAL:
        if marginal_surface is None:
            raise ValueError("marginal policy needs a marginal surface")
        return marginal_surface.hedge_ratio(t, s, y, warn=False)
    if payoff.kind != "put":
        raise ValueError("naive policy is defined for put payoffs")
    delta = black_scholes_put_delta(y, payoff.strike, params.sigma_y, horizon - t)
    return (params.sigma_y * y) / (params.sigma_s * s) * delta


class _RegressionAccumulator:
    """Online normal equations for d_rho ~ b1 * drift + b2 * diffusion."""

    def __init__(self):
        self.xtx = np.zeros((2, 2))
        self.xty = np.zeros(2)
        self.yty = 0.0
        self.n = 0

    def add(self, x1, x2, y):
        self.xtx[0, 0] += float(np.dot(x1, x1))
        self.xtx[0, 1] += float(np.dot(x1, x2))
        self.xtx[1, 1] += float(np.dot(x2, x2))
        self.xty[0] += float(np.dot(x1, y))
        self.xty[1] += float(np.dot(x2, y))
        self.yty += float(np.dot(y, y))
        self.n += len(np.atleast_1d(y))

    def finalize(self) -> dict:
        xtx = self.xtx.copy()
        xtx[1, 0] = xtx[0, 1]
        if self.n < 3 or np.linalg.cond(xtx) > 1e14:
            return {"n": self.n, "valid": False}
        beta = np.linalg.solve(xtx, self.xty)
        ssr = self.yty - 2 * beta @ self.xty + beta @ xtx @ beta
        dof = max(self.n - 2, 1)
        sigma2 = max(ssr, 0.0) / dof
        cov = sigma2 * np.linalg.inv(xtx)
        r2 = 1.0 - ssr / self.yty if self.yty > 0 else np.nan
        return {
            "n": self.n, "valid": True,
            "drift_coef": float(beta[0]), "drift_se": float(np.sqrt(cov[0, 0])),
            "diffusion_coef": float(beta[1]), "diffusion_se": float(np.sqrt(cov[1, 1])),
            "r_squared": float(r2),
        }


def residual_risk_sde_check(sim) -> dict:
    """Coefficients of the realized residual-risk increments against the
    model-implied drift and diffusion terms; unit coefficients mean the
    simulated residual risk follows the predicted dynamics.

    A single SimResult yields the raw regression (whose coefficients carry
    an O(dt) sampling bias from the left-point predictors).  A list of
    SimResults over different step counts additionally returns the
    dt -> 0 extrapolated coefficients with propagated standard errors,
    which is the bias-free estimate the unit-coefficient contract refers to.
    """
    if isinstance(sim, SimResult):
        return _single_regression_report(sim)
    sims = list(sim)
    if len(sims) < 2:
        return _single_regression_report(sims[0])
    rungs = []
    for s in sims:
        rep = _single_regression_report(s)
        rep["dt"] = float(s.times[1] - s.times[0])
        rungs.append(rep)
    out = {"rungs": rungs}
    for name in ("drift", "diffusion"):
        dts = [r["dt"] for r in rungs]
        coefs = [r[f"{name}_coef"] for r in rungs]
        ses = [r[f"{name}_se"] for r in rungs]
        c0, se_stat = _extrapolate_dt(dts, coefs, ses)
        # model-form uncertainty: refit with a dt^(3/2) term and take the
        # spread as a systematic error alongside the statistical one
        se_model = 0.0
        if len(rungs) >= 3:
            c_alt, _ = _extrapolate_dt(dts, coefs, ses, extra_power=1.5)
            se_model = abs(c0 - c_alt)
        se = float(np.hypot(se_stat, se_model))
        out[f"{name}_coef"] = c0
        out[f"{name}_se"] = se
        out[f"{name}_se_stat"] = se_stat
        out[f"{name}_se_model"] = se_model
        out[f"{name}_z"] = (c0 - 1.0) / se
    return out


def _single_regression_report(sim: SimResult) -> dict:
    rep = dict(sim.regression)
    if not rep.get("valid", False):
        raise InconclusiveError("regression underdetermined")
    rep["drift_z"] = (rep["drift_coef"] - 1.0) / rep["drift_se"] if rep["drift_se"] > 0 else np.nan
    rep["diffusion_z"] = (rep["diffusion_coef"] - 1.0) / rep["diffusion_se"]
    return rep


def _extrapolate_dt(dts, coefs, ses, extra_power: float | None = None):
    """Weighted fit c(dt) = c0 + a dt (+ b dt^extra_power); returns (c0, se(c0))."""
    x = np.asarray(dts, dtype=float)
    y = np.asarray(coefs, dtype=float)
    w = 1.0 / np.asarray(ses, dtype=float) ** 2
    cols = [np.ones_like(x), x]
    if extra_power is not None:
        cols.append(x**extra_power)
    X = np.column_stack(cols)
    xtwx = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(xtwx, X.T @ (w * y))
    cov = np.linalg.inv(xtwx)
    return float(beta[0]), float(np.sqrt(cov[0, 0]))


def paerr_martingale_check(sim: SimResult) -> dict:
    """Per-checkpoint mean of L with confidence bands around L_0 = -1.

    L = -exp(-gamma rho) is lognormal-tailed: once gamma sd(rho_T) grows
    past ~1.5, the sample mean (and its estimated standard error) stop
    being reliable at practical path counts; the report flags that regime
    as ``heavy_tailed`` rather than pretending the z-scores mean much.
    """
    z = (sim.paerr_mean + 1.0) / sim.paerr_se
    tail_index = sim.gamma * float(np.std(sim.residual_terminal, ddof=1))
    return {
        "times": sim.checkpoint_times.tolist(),
        "mean": sim.paerr_mean.tolist(),
        "se": sim.paerr_se.tolist(),
        "z": z.tolist(),
        "max_abs_z": float(np.max(np.abs(z))),
        "tail_index": tail_index,
        "heavy_tailed": bool(tail_index > 1.5),
    }


def payoff_decomposition_check(sim: SimResult) -> dict:
    """Terminal residual statistics of the pay-off decomposition."""
    r = sim.payoff_residuals
    return {"rms": float(np.sqrt(np.mean(r**2))), **_stats(r)}


def fss_decomposition_check(sim: SimResult) -> dict:
    """Terminal residual statistics of the gamma = 0 decomposition."""
    if sim.fss_residuals is None:
        raise ValueError("simulation ran without a marginal surface")
    r = sim.fss_residuals
    return {"rms": float(np.sqrt(np.mean(r**2))), **_stats(r)}


def price_representation_check(payoff: PayoffSpec, s: float, y: float, gamma: float,
                               mode: str, prior: PriorParams | None,
                               params: MarketParams, horizon: float,
                               n_paths: int, seed: int,
                               surface: PriceSurface | None = None,
                               marginal_surface: PriceSurface | None = None,
                               grid: GridSpec | None = None, n_steps: int = 250,
                               max_rel_ci: float = 0.05) -> dict:
    """Compare the PDE price with the entropic representation

        p = p_M + (gamma/2) E_QM[ int (1-rho^2)(sigma_y Y p_y)^2 du ],

    the expectation estimated on minimal-martingale-measure paths using the
    gamma-surface derivative field.  A confidence interval wider than
    ``max_rel_ci`` of the price flags the check inconclusive.
    """
    if grid is None:
        grid = GridSpec.around_spot(params, horizon, n_s=48, n_y=301, n_t=200)
    if surface is None:
        surface = solve_pde_euro(payoff, grid, gamma, mode, prior, params, horizon,
                                 picard=3)
    if marginal_surface is None:
        marginal_surface = marginal_price(payoff, grid, mode, prior, params, horizon)

    sim = simulate_under_mmm(params, mode, prior, 0.0, s, y, horizon, n_steps,
                             n_paths, seed)
    times, S, Y = sim["times"], sim["s"], sim["y"]
    integrand = np.empty((n_paths, len(times)))
    for k, tk in enumerate(times):
        pyv = surface.p_y(tk, S[:, k], Y[:, k])
        integrand[:, k] = (params.sigma_y * Y[:, k] * pyv) ** 2
    dt = times[1] - times[0]
    qv = (1 - params.rho**2) * dt * (0.5 * integrand[:, 0]
                                     + integrand[:, 1:-1].sum(axis=1)
                                     + 0.5 * integrand[:, -1])
    correction = 0.5 * gamma * qv
    lhs = float(surface.price(0.0, s, y))
    base = float(marginal_surface.price(0.0, s, y))
    rhs = base + float(np.mean(correction))
    se = float(np.std(correction, ddof=1) / np.sqrt(n_paths))
    out = {"lhs": lhs, "rhs": rhs, "se": se,
           "z": (lhs - rhs) / se if se > 0 else np.nan,
           "inconclusive": bool(se * 3 > max_rel_ci * max(abs(lhs), 1e-12))}
    return out


def correlation_sensitivity(rhos) -> list[tuple[float, float, float]]:
    """Drift and diffusion scale factors (1 - rho^2, sqrt(1 - rho^2)) of the
    residual-risk dynamics, tabulated per correlation."""
    out = []
    for r in rhos:
        if abs(r) > 1:
            raise ValueError("correlation must lie in [-1, 1]")
        out.append((float(r), float(1 - r**2), float(np.sqrt(1 - r**2))))
    return out


def correlation_table_csv(rhos, path: str) -> None:
    write_csv(path, ["rho", "one_minus_rho_sq", "sqrt_one_minus_rho_sq"],
              correlation_sensitivity(rhos))
