"""Independent reference calculators used as test oracles.

Nothing here imports solver internals: the binomial tree, quadrature
valuations and the Gaussian law of the filtered model are derived directly
from the model primitives so they can sit on the other side of a dual-route
check.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate
from scipy.stats import norm


def binomial_american_put(y0: float, sigma: float, drift: float, horizon: float,
                          strike: float, n_steps: int) -> float:
    """CRR tree under dY/Y = drift dt + sigma dW with zero discounting."""
    dt = horizon / n_steps
    u = np.exp(sigma * np.sqrt(dt))
    d = 1.0 / u
    q = (np.exp(drift * dt) - d) / (u - d)
    if not (0.0 < q < 1.0):
        raise ValueError("tree probability outside (0,1); refine steps")
    j = np.arange(n_steps + 1)
    v = np.maximum(strike - y0 * u**j * d**(n_steps - j), 0.0)
    for k in range(n_steps - 1, -1, -1):
        jj = np.arange(k + 1)
        y = y0 * u**jj * d**(k - jj)
        v = np.maximum(q * v[1:] + (1 - q) * v[:-1], strike - y)
    return float(v[0])


def lognormal_expectation(fn, mean_log: float, sd_log: float, tol: float = 1e-10) -> float:
    """E[fn(exp(Z))] for Z ~ N(mean_log, sd_log^2) by adaptive quadrature."""
    val, _ = integrate.quad(
        lambda z: fn(np.exp(mean_log + sd_log * z)) * norm.pdf(z),
        -12.0, 12.0, epsabs=tol, epsrel=tol, limit=400)
    return float(val)


def lognormal_put(strike: float, mean_log: float, var_log: float) -> float:
    """E[(K - Y)^+] for log Y ~ N(mean_log, var_log), closed form."""
    sd = np.sqrt(var_log)
    d = (np.log(strike) - mean_log) / sd
    return float(strike * norm.cdf(d) - np.exp(mean_log + 0.5 * var_log) * norm.cdf(d - sd))


def mmm_terminal_law_general(params, prior, horizon: float,
                             n_ode: int = 4000) -> tuple[float, float]:
    """(mean, variance) of log Y_T under the minimal martingale measure in
    the filtered model, any prior-variance ordering.

    The stock observation process is a Brownian motion under that measure
    and the drift of xi_y is linear in (xi_y, xi_s), so (mean, variance,
    covariance) of xi_y follow three scalar ODEs, integrated here with
    classical fourth-order steps.
    """
    rho = params.rho
    zs, zy = prior.z0_s, prior.z0_y
    l0s, l0y = prior.lambda0_s, prior.lambda0_y
    if zs == zy:
        w0 = zs
    elif zs < zy:
        w0 = (zy - rho**2 * zs) / (1.0 - rho**2)
    else:
        w0 = (zs - rho**2 * zy) / (1.0 - rho**2)

    if zs <= zy:
        # drift of xi_y: [a0 + w0 (xi_y - rho xi_s)] / (1 + w0 t)
        def coeffs(t):
            g = 1.0 + w0 * t
            return (l0y - rho * l0s) / g, w0 / g, -rho * w0 / g
    else:
        # low-variance label is the non-traded asset
        def coeffs(t):
            g = 1.0 + w0 * t
            h = 1.0 + zy * t
            a = (1.0 - rho**2) * l0y / h + (rho**2 * l0y - rho * l0s) / g
            b = (1.0 - rho**2) * zy / h + rho**2 * w0 / g
            c = -rho * w0 / g
            return a, b, c

    def rhs(t, state):
        m, v, k = state
        a, b, c = coeffs(t)
        return np.array([
            a + b * m,                 # mean (xi_s has zero mean)
            2.0 * (b * v + c * k) + 1.0,
            b * k + c * t + rho,       # cov with xi_s (Var[xi_s] = t)
        ])

    state = np.zeros(3)
    dt = horizon / n_ode
    t = 0.0
    for _ in range(n_ode):
        k1 = rhs(t, state)
        k2 = rhs(t + dt / 2, state + dt / 2 * k1)
        k3 = rhs(t + dt / 2, state + dt / 2 * k2)
        k4 = rhs(t + dt, state + dt * k3)
        state = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt

    m_xi, v_xi, _ = state
    sy = params.sigma_y
    mean = np.log(params.y0) + sy * (m_xi - 0.5 * sy * horizon)
    return float(mean), float(sy**2 * v_xi)


def mmm_terminal_law_partial(params, prior, horizon: float) -> tuple[float, float]:
    """(mean, variance) of log Y_T under the minimal martingale measure in
    the filtered model, for prior variances z0_s <= z0_y.

    Under that measure the stock observation process is a Brownian motion,
    and the drift of xi_y - rho xi_s is linear with an integrating-factor
    solution, so log Y_T stays Gaussian:

        E[log Y_T]   = log y0 + sigma_y (a0 T - sigma_y T / 2),
        Var[log Y_T] = sigma_y^2 T (1 + (1 - rho^2) w0 T),

    with a0 = lambda0_y - rho lambda0_s and
    w0 = (z0_y - rho^2 z0_s) / (1 - rho^2) (w0 = z0 when equal).
    """
    if prior.z0_s > prior.z0_y:
        raise ValueError("law derived for z0_s <= z0_y")
    rho = params.rho
    if prior.z0_s == prior.z0_y:
        w0 = prior.z0_s
    else:
        w0 = (prior.z0_y - rho**2 * prior.z0_s) / (1.0 - rho**2)
    a0 = prior.lambda0_y - rho * prior.lambda0_s
    t = horizon
    mean = np.log(params.y0) + params.sigma_y * (a0 * t - 0.5 * params.sigma_y * t)
    var = params.sigma_y**2 * t * (1.0 + (1.0 - rho**2) * w0 * t)
    return float(mean), float(var)
