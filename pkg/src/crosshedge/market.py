"""Basis-risk market model: parameters, exact lognormal path simulation and
the statistical-estimation helpers (Sharpe ratio, confidence horizons,
realized volatility/correlation).

The traded stock S and the non-traded asset Y follow correlated geometric
Brownian motions

    dS = sigma_s * S * (lambda_s dt + dW_s),
    dY = sigma_y * Y * (lambda_y dt + dW_y),   W_y = rho W_s + sqrt(1-rho^2) W_perp,

with the riskless rate fixed at zero.  Paths are stepped with the exact
log-normal transition, so there is no Euler discretization error in prices.
All operations are pure given (params, seed); path generation uses one
spawned RNG substream per path and is safe to partition across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._io import write_csv
from .errors import EstimationDegenerateError


@dataclass(frozen=True)
class MarketParams:
    """Model constants. Volatilities and Sharpe ratios are per sqrt(year) /
    per year; ``rate`` is kept explicit but pinned to zero."""

    sigma_s: float
    sigma_y: float
    rho: float
    lambda_s: float
    lambda_y: float
    s0: float = 100.0
    y0: float = 100.0
    rate: float = 0.0

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_y < 0:
            raise ValueError("volatilities must be nonnegative")
        if abs(self.rho) > 1:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.rho}")
        if self.s0 <= 0 or self.y0 <= 0:
            raise ValueError("initial prices must be positive")
        if self.rate != 0.0:
            raise ValueError("model is built for zero riskless rate")

    @property
    def complete(self) -> bool:
        return abs(self.rho) == 1.0


@dataclass(frozen=True)
class PathBundle:
    """One simulated path pair with its driving Brownian increments.

    ``w_s`` and ``w_perp`` hold the increments of W_s and W_perp on the step
    grid (length ``len(times) - 1``); they are retained so downstream checks
    can reconstruct the correlated driver exactly.
    """

    times: np.ndarray
    s: np.ndarray
    y: np.ndarray
    w_s: np.ndarray
    w_perp: np.ndarray
    seed: int

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.s) == len(self.y) == n and len(self.w_s) == len(self.w_perp) == n - 1):
            raise ValueError("series lengths inconsistent with time grid")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(self.s <= 0) or np.any(self.y <= 0):
            raise ValueError("prices must stay positive")


def sharpe_ratio(mu: float, rate: float, sigma: float) -> float:
    """Market price of risk (mu - rate) / sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return (mu - rate) / sigma


def years_for_confidence(half_width: float, z_score: float) -> float:
    """Observation horizon (years) needed before the drift estimator's
    confidence half-width z/sqrt(t) shrinks to ``half_width``."""
    if half_width <= 0 or z_score <= 0:
        raise ValueError("half_width and z_score must be positive")
    return (z_score / half_width) ** 2


def simulate_paths(
    params: MarketParams,
    horizon: float,
    n_steps: int,
    n_paths: int,
    seed: int,
) -> list[PathBundle]:
    """Simulate paths under the physical measure with exact lognormal steps.

    Each path draws from its own spawned substream of ``seed``, so a bundle
    is reproducible independently of how many paths are generated or in what
    order.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be at least 1")

    times = np.linspace(0.0, horizon, n_steps + 1)
    streams = np.random.SeedSequence(seed).spawn(n_paths)
    return [_one_path(params, times, stream, seed) for stream in streams]


def _one_path(params: MarketParams, times: np.ndarray, stream, seed: int) -> PathBundle:
    rng = np.random.default_rng(stream)
    dt = np.diff(times)
    sq = np.sqrt(dt)
    dw_s = sq * rng.standard_normal(len(dt))
    dw_perp = sq * rng.standard_normal(len(dt))
    return PathBundle(times=times, seed=seed, w_s=dw_s, w_perp=dw_perp,
                      **_prices_from_increments(params, times, dw_s, dw_perp))


def _prices_from_increments(params, times, dw_s, dw_perp) -> dict:
    """Exact transitions S_{t+dt} = S_t exp(sigma((lambda - sigma/2)dt + dW))."""
    dt = np.diff(times)
    dw_y = params.rho * dw_s + np.sqrt(1.0 - params.rho**2) * dw_perp
    log_s = np.concatenate([[0.0], np.cumsum(
        params.sigma_s * ((params.lambda_s - 0.5 * params.sigma_s) * dt + dw_s))])
    log_y = np.concatenate([[0.0], np.cumsum(
        params.sigma_y * ((params.lambda_y - 0.5 * params.sigma_y) * dt + dw_y))])
    return {"s": params.s0 * np.exp(log_s), "y": params.y0 * np.exp(log_y)}


def simulate_path_arrays(
    params: MarketParams,
    horizon: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    lambdas: tuple[np.ndarray, np.ndarray] | None = None,
) -> dict:
    """Vectorized P-measure simulation used by the Monte Carlo laboratories.

    Returns arrays of shape (n_paths, n_steps+1) for ``s``/``y`` and
    (n_paths, n_steps) for the Brownian increments.  ``lambdas`` optionally
    supplies per-path true Sharpe ratios (misspecification / prior-draw
    studies); defaults to the constants in ``params``.  A single generator is
    used (no per-path substreams); determinism is per (seed, shape).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    dt = horizon / n_steps
    dw_s = np.sqrt(dt) * rng.standard_normal((n_paths, n_steps))
    dw_perp = np.sqrt(dt) * rng.standard_normal((n_paths, n_steps))
    dw_y = params.rho * dw_s + np.sqrt(1.0 - params.rho**2) * dw_perp

    if lambdas is None:
        lam_s = np.full(n_paths, params.lambda_s)
        lam_y = np.full(n_paths, params.lambda_y)
    else:
        lam_s, lam_y = (np.asarray(a, dtype=float) for a in lambdas)

    log_s = np.cumsum(params.sigma_s * ((lam_s[:, None] - 0.5 * params.sigma_s) * dt + dw_s), axis=1)
    log_y = np.cumsum(params.sigma_y * ((lam_y[:, None] - 0.5 * params.sigma_y) * dt + dw_y), axis=1)
    zeros = np.zeros((n_paths, 1))
    return {
        "times": np.linspace(0.0, horizon, n_steps + 1),
        "s": params.s0 * np.exp(np.hstack([zeros, log_s])),
        "y": params.y0 * np.exp(np.hstack([zeros, log_y])),
        "dw_s": dw_s,
        "dw_perp": dw_perp,
        "lam_s": lam_s,
        "lam_y": lam_y,
    }


def estimate_vol_corr(bundle: PathBundle) -> tuple[float, float, float]:
    """Realized volatility and correlation estimators from one discrete path.

    Uses the log-return quadratic (co)variation divided by elapsed time.  A
    path whose log-increments carry essentially no variation relative to
    their magnitude (constant or deterministic-trend prices) is rejected as
    estimation-degenerate.
    """
    if len(bundle.times) < 2:
        raise ValueError("need at least two time points")
    elapsed = bundle.times[-1] - bundle.times[0]
    dls = np.diff(np.log(bundle.s))
    dly = np.diff(np.log(bundle.y))

    for d in (dls, dly):
        mean_sq = np.mean(d**2)
        if mean_sq == 0.0:
            raise EstimationDegenerateError(
                "constant path has zero quadratic variation")
        # a smooth deterministic trend leaves almost no variation in the
        # increments relative to their size; a diffusion leaves O(1)
        if len(d) >= 3 and np.var(d) < 1e-3 * mean_sq:
            raise EstimationDegenerateError(
                "path shows no diffusive variation; volatility/correlation undefined")

    var_s = np.sum(dls**2) / elapsed
    var_y = np.sum(dly**2) / elapsed
    cov = np.sum(dls * dly) / elapsed
    return float(np.sqrt(var_s)), float(np.sqrt(var_y)), float(cov / np.sqrt(var_s * var_y))


def paths_to_csv(bundles: list[PathBundle], path: str) -> None:
    """Export bundles as CSV with columns (path_id, t, S, Y)."""
    rows = (
        (pid, float(t), float(s), float(y))
        for pid, b in enumerate(bundles)
        for t, s, y in zip(b.times, b.s, b.y)
    )
    write_csv(path, ["path_id", "t", "S", "Y"], rows)
