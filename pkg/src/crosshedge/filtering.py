"""Two-dimensional Kalman-Bucy filter for the asset Sharpe ratios.

The unknown constant Sharpe ratios get a Gaussian prior N(Lambda0, Sigma0)
with cross-covariance c0 = rho * min(z0_s, z0_y).  Observing prices is
equivalent to observing

    xi_s(t) = log(S_t/S_0)/sigma_s + sigma_s t / 2 = lambda_s t + W_s(t),

and likewise for Y, so the conditional means admit closed forms keyed on the
ordering of the prior variances.  Everything here is a pure function of
(t, prices, prior) and safe for unrestricted concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._io import write_csv
from .errors import UnsupportedRegimeError
from .market import MarketParams


@dataclass(frozen=True)
class PriorParams:
    """Gaussian prior for (lambda_s, lambda_y): means and variances."""

    lambda0_s: float
    lambda0_y: float
    z0_s: float
    z0_y: float

    def __post_init__(self):
        if self.z0_s < 0 or self.z0_y < 0:
            raise ValueError("prior variances must be nonnegative")

    def c0(self, rho: float) -> float:
        """Prior cross-covariance rho * min(z0_s, z0_y)."""
        return rho * min(self.z0_s, self.z0_y)

    def covariance(self, rho: float) -> np.ndarray:
        c = self.c0(rho)
        return np.array([[self.z0_s, c], [c, self.z0_y]])


@dataclass(frozen=True)
class FilterState:
    """Filter output at one time: observations, conditional means, covariance
    entries and the accumulated mean-variance trade-off a = int lambda_s^2."""

    t: float
    xi_s: float
    xi_y: float
    lambda_hat_s: float
    lambda_hat_y: float
    z_s: float
    z_y: float
    w: float
    c: float
    a: float = 0.0


def observation_from_prices(t, s, y, params: MarketParams):
    """Map prices to the observation pair (xi_s, xi_y).

    Accepts scalars or arrays; requires positive prices and volatilities.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(s <= 0) or np.any(y <= 0):
        raise ValueError("prices must be positive")
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    if params.sigma_s <= 0 or params.sigma_y <= 0:
        raise ValueError("observations require positive volatilities")
    xi_s = np.log(s / params.s0) / params.sigma_s + 0.5 * params.sigma_s * t
    xi_y = np.log(y / params.y0) / params.sigma_y + 0.5 * params.sigma_y * t
    return xi_s, xi_y


def covariance_decay(t, z0):
    """Conditional variance z0 / (1 + z0 t); z0 = 0 stays exactly 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    if np.any(np.asarray(z0) < 0):
        raise ValueError("prior variance must be nonnegative")
    return z0 / (1.0 + z0 * t)


def _w0(prior: PriorParams, rho: float) -> tuple[str, str, float]:
    """Resolve the (low, high)-variance labels and the auxiliary variance w0."""
    if prior.z0_s == prior.z0_y:
        return "s", "y", prior.z0_s
    if abs(rho) == 1.0:
        raise UnsupportedRegimeError(
            "filter formulas assume |rho| != 1 when prior variances differ")
    if prior.z0_s < prior.z0_y:
        i, j = "s", "y"
        z0_i, z0_j = prior.z0_s, prior.z0_y
    else:
        i, j = "y", "s"
        z0_i, z0_j = prior.z0_y, prior.z0_s
    return i, j, (z0_j - rho**2 * z0_i) / (1.0 - rho**2)


def filter_estimates(t, xi_s, xi_y, prior: PriorParams, rho: float) -> FilterState:
    """Closed-form conditional means and covariances at time t.

    With i the smaller-variance label and j the other one,

        lhat_i = (l0_i + z0_i xi_i) / (1 + z0_i t),
        lhat_j = (l0_j + w0 xi_j) / (1 + w0 t)
                 - rho * ((l0_i + w0 xi_i) / (1 + w0 t) - lhat_i),

    where w0 = (z0_j - rho^2 z0_i) / (1 - rho^2) (w0 = z0 when the prior
    variances are equal, in which case the two filters decouple).
    """
    lam_s, lam_y = _filter_means(t, xi_s, xi_y, prior, rho)
    i, _, w0 = _w0(prior, rho)
    z0_i = prior.z0_s if i == "s" else prior.z0_y
    z_i = covariance_decay(t, z0_i)
    w = covariance_decay(t, w0)
    z_j = rho**2 * z_i + (1.0 - rho**2) * w
    z_s, z_y = (z_i, z_j) if i == "s" else (z_j, z_i)
    return FilterState(
        t=float(t), xi_s=float(xi_s), xi_y=float(xi_y),
        lambda_hat_s=float(lam_s), lambda_hat_y=float(lam_y),
        z_s=float(z_s), z_y=float(z_y), w=float(w), c=float(rho * z_i),
    )


def _filter_means(t, xi_s, xi_y, prior: PriorParams, rho: float):
    """Vector-friendly conditional means (arrays in, arrays out)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    i, _, w0 = _w0(prior, rho)
    if i == "s":
        l0_i, l0_j, z0_i = prior.lambda0_s, prior.lambda0_y, prior.z0_s
        xi_i, xi_j = xi_s, xi_y
    else:
        l0_i, l0_j, z0_i = prior.lambda0_y, prior.lambda0_s, prior.z0_y
        xi_i, xi_j = xi_y, xi_s

    lam_i = (l0_i + z0_i * xi_i) / (1.0 + z0_i * t)
    lam_j = (l0_j + w0 * xi_j) / (1.0 + w0 * t) - rho * (
        (l0_i + w0 * xi_i) / (1.0 + w0 * t) - lam_i)
    return (lam_i, lam_j) if i == "s" else (lam_j, lam_i)


def mpr_fields(t, s, y, prior: PriorParams, params: MarketParams):
    """Filtered Sharpe ratios as functions of state (t, s, y).

    Composes the observation map with the closed-form filter; accepts arrays
    (broadcast over s, y).  With z0_s < z0_y the stock estimate depends on
    (t, s) only; with equal prior variances the estimates separate; with
    z0_s > z0_y the stock estimate picks up a y-dependence.
    """
    xi_s, xi_y = observation_from_prices(t, s, y, params)
    return _filter_means(t, xi_s, xi_y, prior, params.rho)


def accumulate_tradeoff(times, lam_s) -> np.ndarray:
    """Trade-off clock A_t = int_0^t lambda_hat_s^2 du by trapezoidal rule.

    Returns the cumulative values on ``times`` (first entry 0).
    """
    times = np.asarray(times, dtype=float)
    lam_s = np.asarray(lam_s, dtype=float)
    if times.ndim != 1 or len(times) != len(lam_s):
        raise ValueError("times and lambda series must have equal length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    sq = lam_s**2
    increments = 0.5 * (sq[1:] + sq[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(increments)])


def filter_trace(bundle, prior: PriorParams, params: MarketParams) -> list[FilterState]:
    """Run the filter along one simulated path, accumulating the trade-off."""
    xi_s, xi_y = observation_from_prices(bundle.times, bundle.s, bundle.y, params)
    lam_s, lam_y = _filter_means(bundle.times, xi_s, xi_y, prior, params.rho)
    a = accumulate_tradeoff(bundle.times, lam_s)
    states = []
    for k, t in enumerate(bundle.times):
        st = filter_estimates(t, xi_s[k], xi_y[k], prior, params.rho)
        states.append(FilterState(**{**st.__dict__, "a": float(a[k])}))
    return states


_TRACE_COLUMNS = ["t", "xi_s", "xi_y", "lambda_hat_s", "lambda_hat_y",
                  "z_s", "z_y", "w", "c", "a"]


def _trace_row(st: FilterState) -> list[float]:
    return [st.t, st.xi_s, st.xi_y, st.lambda_hat_s, st.lambda_hat_y,
            st.z_s, st.z_y, st.w, st.c, st.a]


def trace_to_csv(states: list[FilterState], path: str) -> None:
    """Export a single filter trace as CSV (documented column set)."""
    write_csv(path, _TRACE_COLUMNS, [_trace_row(st) for st in states])


def traces_to_csv(traces: list[list[FilterState]], path: str) -> None:
    """Export several traces in long form; prepends a path_id column."""
    rows = ([pid] + _trace_row(st) for pid, states in enumerate(traces) for st in states)
    write_csv(path, ["path_id"] + _TRACE_COLUMNS, rows)
