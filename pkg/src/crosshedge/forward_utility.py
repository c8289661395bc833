"""Forward performance machinery: the deterministic utility u(x, t), its
local risk tolerance r = -u_x/u_xx, the asymptotically linear family
r(x,t) = sqrt(alpha x^2 + beta e^{-alpha t}) with exponential / power /
logarithmic limits, and residual-based verification of the defining PDEs

    u_t u_xx = u_x^2 / 2            (utility)
    u_t + r u_x / 2 = 0             (transport)
    r_t + r^2 r_xx / 2 = 0          (fast diffusion)
    g_t = (1/g)_xx / 2              (risk aversion g = 1/r)

Verification is finite-difference based so the same harness applies to
user-supplied utilities; all functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import StencilError


@dataclass(frozen=True)
class PreferenceParams:
    """Risk-preference constants.  ``gamma`` drives the exponential pricing
    and hedging layers; (alpha, beta, m, n) parameterize the general utility
    family, with gamma = 1/sqrt(beta) in the exponential limit."""

    gamma: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    m: float = 1.0
    n: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("risk aversion must be nonnegative")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.m <= 0:
            raise ValueError("monotonicity requires m > 0")


@dataclass(frozen=True)
class UtilityKind:
    """One member of the forward utility family.

    ``family`` is one of 'exponential', 'power', 'logarithmic', 'general'.
    Use the constructors below rather than instantiating directly.
    """

    family: str
    alpha: float = 1.0
    beta: float = 1.0
    m: float = 1.0
    n: float = 0.0


def exponential(beta: float = 1.0) -> UtilityKind:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return UtilityKind("exponential", beta=beta)


def power(alpha: float) -> UtilityKind:
    if alpha <= 0 or alpha == 1.0:
        raise ValueError("power utility requires alpha > 0, alpha != 1")
    return UtilityKind("power", alpha=alpha)


def logarithmic() -> UtilityKind:
    return UtilityKind("logarithmic")


def general(alpha: float, beta: float, m: float = 1.0, n: float = 0.0) -> UtilityKind:
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if m <= 0:
        raise ValueError("monotonicity requires m > 0")
    return UtilityKind("general", alpha=alpha, beta=beta, m=m, n=n)


def _check_domain(kind: UtilityKind, x: float) -> None:
    if kind.family == "power" and x < 0:
        raise ValueError("power utility requires x >= 0")
    if kind.family == "logarithmic" and x <= 0:
        raise ValueError("logarithmic utility requires x > 0")


def risk_tolerance(kind: UtilityKind, x: float, t: float) -> float:
    """Local risk tolerance r(x, t) in closed form."""
    _check_domain(kind, x)
    if kind.family == "exponential":
        return math.sqrt(kind.beta)
    if kind.family == "power":
        return math.sqrt(kind.alpha) * x
    if kind.family == "logarithmic":
        return x
    return math.sqrt(kind.alpha * x * x + kind.beta * math.exp(-kind.alpha * t))


def utility(kind: UtilityKind, x: float, t: float) -> float:
    """Forward utility u(x, t) in closed form.

    The time argument is the trade-off clock value when used as a
    performance process.
    """
    _check_domain(kind, x)
    if kind.family == "exponential":
        return -math.exp(-x / math.sqrt(kind.beta) + 0.5 * t)
    if kind.family == "power":
        delta = (math.sqrt(kind.alpha) - 1.0) / math.sqrt(kind.alpha)
        return (x**delta / delta) * math.exp(-0.5 * delta / (1.0 - delta) * t)
    if kind.family == "logarithmic":
        return math.log(x) - 0.5 * t
    return _general_utility(kind, x, t)


def _general_utility(kind: UtilityKind, x: float, t: float) -> float:
    a, b = kind.alpha, kind.beta
    ra = math.sqrt(a)
    r = math.sqrt(a * x * x + b * math.exp(-a * t))
    if a == 1.0:
        # log-family branch
        return 0.5 * kind.m * (
            math.log(x + math.sqrt(x * x + b * math.exp(-t)))
            - (math.exp(t) / b) * x * (x - math.sqrt(x * x + b * math.exp(-t)))
            - 0.5 * t
        ) + kind.n
    core = (b / ra) * math.exp(-a * t) + (1.0 + ra) * x * (ra * x + r)
    return (
        kind.m * ra ** (1.0 + 1.0 / ra) / (a - 1.0)
        * math.exp(0.5 * (1.0 - ra) * t)
        * core / (ra * x + r) ** (1.0 + 1.0 / ra)
        + kind.n
    )


def forward_performance(x: float, a: float, gamma: float) -> float:
    """Exponential forward performance U = -exp(-gamma x + a/2) at trade-off a."""
    if a < 0:
        raise ValueError("trade-off value must be nonnegative")
    return -math.exp(-gamma * x + 0.5 * a)


def merton_allocation(lambda_hat_s: float, sigma_s: float, x: float, a: float,
                      kind: UtilityKind) -> float:
    """Optimal cash allocation pi* = -(lambda/sigma) u_x/u_xx = (lambda/sigma) r(x, a).

    Reduces to lambda / (gamma sigma) in the exponential case.
    """
    if sigma_s <= 0:
        raise ValueError("sigma must be positive")
    return lambda_hat_s / sigma_s * risk_tolerance(kind, x, a)


# --- residual verification -------------------------------------------------
#
# The operators below accept either a UtilityKind or a callable (x, t) -> value,
# so deliberately wrong candidates can serve as negative controls.

Scalar2 = Callable[[float, float], float]


def _as_u(fn) -> Scalar2:
    if isinstance(fn, UtilityKind):
        return lambda x, t: utility(fn, x, t)
    return fn


def _as_r(fn) -> Scalar2:
    if isinstance(fn, UtilityKind):
        return lambda x, t: risk_tolerance(fn, x, t)
    return fn


def default_step(x: float) -> float:
    return 1e-4 * max(1.0, abs(x))


def _d(fn: Scalar2, x: float, t: float, h: float):
    """Central first/second derivatives in x and first in t."""
    if t - h < 0:
        raise StencilError(f"time stencil leaves [0, inf): t={t}, h={h}")
    f0 = fn(x, t)
    fxp, fxm = fn(x + h, t), fn(x - h, t)
    ftp, ftm = fn(x, t + h), fn(x, t - h)
    fx = (fxp - fxm) / (2 * h)
    fxx = (fxp - 2 * f0 + fxm) / (h * h)
    ft = (ftp - ftm) / (2 * h)
    return f0, fx, fxx, ft


def u_pde_residual(kind, x: float, t: float, h: float | None = None) -> float:
    """Residual of u_t u_xx - u_x^2 / 2 by central differences (O(h^2))."""
    u = _as_u(kind)
    h = default_step(x) if h is None else h
    _, ux, uxx, ut = _d(u, x, t, h)
    return ut * uxx - 0.5 * ux * ux


def transport_residual(kind, x: float, t: float, h: float | None = None,
                       r_fn: Scalar2 | None = None) -> float:
    """Residual of u_t + r u_x / 2.

    ``r`` comes from the closed form for a UtilityKind; a callable candidate
    must bring its own ``r_fn``.
    """
    u = _as_u(kind)
    if isinstance(kind, UtilityKind):
        r = _as_r(kind)
    elif r_fn is not None:
        r = r_fn
    else:
        raise ValueError("callable candidates need an explicit r_fn")
    h = default_step(x) if h is None else h
    _, ux, _, ut = _d(u, x, t, h)
    return ut + 0.5 * r(x, t) * ux


def fast_diffusion_residual(kind, x: float, t: float, h: float | None = None) -> float:
    """Residual of r_t + r^2 r_xx / 2 for the local risk tolerance."""
    r = _as_r(kind)
    h = default_step(x) if h is None else h
    r0, _, rxx, rt = _d(r, x, t, h)
    return rt + 0.5 * r0 * r0 * rxx


def risk_aversion_residual(kind, x: float, t: float, h: float | None = None) -> float:
    """Residual of g_t - (1/g)_xx / 2 for the local risk aversion g = 1/r."""
    r = _as_r(kind)
    h = default_step(x) if h is None else h
    if t - h < 0:
        raise StencilError(f"time stencil leaves [0, inf): t={t}, h={h}")
    # g = 1/r, and (1/g)_xx is just r_xx
    gt = (1.0 / r(x, t + h) - 1.0 / r(x, t - h)) / (2 * h)
    rxx = (r(x + h, t) - 2 * r(x, t) + r(x - h, t)) / (h * h)
    return gt - 0.5 * rxx


def utility_table_csv(kind: UtilityKind, xs, ts, path: str) -> None:
    """Export a (x, t, u, r, gamma) table over the given sample points."""
    from ._io import write_csv

    rows = []
    for t in ts:
        for x in xs:
            r = risk_tolerance(kind, x, t)
            rows.append((float(x), float(t), utility(kind, x, t), r,
                         (1.0 / r) if r > 0 else float("inf")))
    write_csv(path, ["x", "t", "u", "r", "gamma"], rows)


def utility_via_characteristics(kind: UtilityKind, x: float, t: float,
                                dt: float = 1e-3) -> float:
    """Rebuild u(x, t) from r alone through the transport characteristics.

    The level curves of u satisfy dx/ds = r(x, s)/2; integrating backward
    from (x, t) to s = 0 with classical fourth-order steps and evaluating the
    initial datum there cross-checks the closed forms.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")

    def slope(xx, ss):
        return 0.5 * risk_tolerance(kind, xx, ss)

    n = max(1, int(round(t / dt)))
    step = t / n
    s, xx = t, x
    for _ in range(n):
        k1 = slope(xx, s)
        k2 = slope(xx - 0.5 * step * k1, s - 0.5 * step)
        k3 = slope(xx - 0.5 * step * k2, s - 0.5 * step)
        k4 = slope(xx - step * k3, s - step)
        xx -= step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        s -= step
    return utility(kind, xx, 0.0)
