"""American forward indifference pricing as an obstacle problem.

Backward induction with the same discretized pricing operator as the
European solver, constrained at each level by the exercise value:

    min( -(p_t + A p + (gamma/2)(1-rho^2)(sigma_y y p_y)^2), p - C ) = 0,
    p(T, ., y) = C(y).

Two complementarity solvers are provided: projected SOR (default in one
space dimension) and a penalty/active-set iteration with sparse direct
solves (default for the two-dimensional partial-information problem).  The
exercise boundary is extracted per s-slice, and the first-hitting stopping
rule can be evaluated along simulated paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ._io import write_csv
from .errors import BoundaryUndefinedError, SolverFailureError
from .euro import FULL_INFO, GridSpec, PayoffSpec, PriceSurface, _Stepper
from .filtering import PriorParams
from .market import MarketParams


@dataclass
class AmericanResult:
    """VI solution with exercise diagnostics.

    ``exercise_region`` marks nodes where the price sits on the obstacle;
    ``boundary`` holds the critical y per (time, s-slice) (NaN where the
    region is empty); the residuals are global maxima over interior nodes
    and time steps.
    """

    surface: PriceSurface
    exercise_region: np.ndarray
    boundary: np.ndarray
    complementarity_residual: float
    obstacle_violation: float

    def boundary_to_csv(self, path: str) -> None:
        rows = []
        for it, t in enumerate(self.surface.times):
            for js, s in enumerate(self.surface.s):
                rows.append((float(t), float(s), float(self.boundary[it, js])))
        write_csv(path, ["t", "s_slice", "y_critical"], rows)

    def region_to_csv(self, path: str) -> None:
        rows = []
        for it, t in enumerate(self.surface.times):
            for js, s in enumerate(self.surface.s):
                for k, y in enumerate(self.surface.y):
                    rows.append((float(t), float(s), float(y),
                                 int(self.exercise_region[it, js, k])))
        write_csv(path, ["t", "s", "y", "exercised"], rows)


def _lcp_residual(A, p, rhs, obstacle, dt):
    """Pointwise min of the scaled PDE residual and the obstacle gap."""
    r_pde = (A @ p - rhs) / dt
    return np.minimum(r_pde, p - obstacle)


def _psor(A, rhs, obstacle, p0, dt, omega=1.2, tol=1e-8, max_sweeps=500,
          scale=1.0):
    """Projected SOR in red-black ordering on the assembled matrix.

    Stops when the rate-scaled complementarity residual drops below
    ``tol * scale``.  Same-color couplings (cross-derivative corners) are
    handled Jacobi-style within each half sweep.
    """
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag == 0):
        raise SolverFailureError("singular diagonal in PSOR")
    colors = (np.arange(n) % 2 == 0)  # exact red-black for tridiagonal systems
    p = np.maximum(p0.copy(), obstacle)
    for sweep in range(max_sweeps):
        for color in (colors, ~colors):
            resid = rhs - A @ p
            p_new = p + omega * resid / diag
            p = np.where(color, np.maximum(p_new, obstacle), p)
        r = _lcp_residual(A, p, rhs, obstacle, dt)
        if np.max(np.abs(r)) <= tol * scale:
            return p, sweep + 1
    raise SolverFailureError(
        "projected SOR did not converge",
        {"sweeps": max_sweeps, "residual": float(np.max(np.abs(r)))})


def _penalty(A, rhs, obstacle, p0, dt, penalty=1e7, max_iters=40):
    """Active-set penalty iteration: solve (A + penalty I_active) p =
    rhs + penalty I_active C until the active set is stable."""
    if not np.isfinite(penalty) or penalty <= 0:
        raise SolverFailureError("penalty parameter must be positive and finite")
    p = np.maximum(p0.copy(), obstacle)
    active = p0 < obstacle
    for it in range(max_iters):
        mask = sparse.diags(active.astype(float))
        M = (A + penalty * mask).tocsc()
        p = splu(M).solve(rhs + penalty * np.where(active, obstacle, 0.0))
        new_active = p < obstacle
        if np.array_equal(new_active, active):
            return p, it + 1
        active = new_active
    raise SolverFailureError("penalty iteration did not stabilize",
                             {"iters": max_iters})


def solve_vi_american(payoff: PayoffSpec, grid: GridSpec, gamma: float, mode: str,
                      prior: PriorParams | None, params: MarketParams,
                      horizon: float, method: str = "auto", picard: int = 1,
                      exercise_value: Callable[[float, np.ndarray], np.ndarray] | None = None,
                      omega: float = 1.2, psor_tol: float = 1e-8,
                      max_sweeps: int = 500, penalty: float = 1e7,
                      region_tol: float = 1e-9) -> AmericanResult:
    """Solve the obstacle problem by backward induction (implicit Euler).

    ``exercise_value`` optionally supplies a time-dependent exercise value
    C(t, y); the static payoff is the default.  ``method`` is 'psor',
    'penalty' or 'auto' (psor in 1D, penalty in 2D).
    """
    stepper = _Stepper(grid, gamma, mode, prior, params, horizon,
                       theta=1.0, rannacher=0, picard=picard)
    ns, ny = len(stepper.s), len(stepper.y)
    if method == "auto":
        method = "psor" if ns == 1 else "penalty"
    if method not in ("psor", "penalty"):
        raise ValueError(f"unknown method {method!r}")

    def c_plane(t: float) -> np.ndarray:
        if exercise_value is not None:
            return np.tile(np.asarray(exercise_value(t, stepper.y), dtype=float), (ns, 1))
        return np.tile(payoff(stepper.y), (ns, 1))

    times = stepper.times
    dt = times[1] - times[0]
    values = np.empty((len(times), ns, ny))
    values[-1] = c_plane(times[-1])
    p = values[-1].ravel().copy()
    scale = max(1.0, float(np.max(np.abs(values[-1]))))

    comp_worst = 0.0
    obstacle_worst = 0.0

    for k in range(len(times) - 2, -1, -1):
        t = times[k]
        A, B, mask = stepper.system(t, dt, 1.0)
        # the obstacle binds everywhere, boundary extrapolation rows included
        # (their rows then read max(extrapolated value, exercise value))
        obstacle = c_plane(t).ravel()
        rhs_base = B @ p
        rhs_base[mask] = 0.0

        p_new = p
        for it in range(max(1, picard)):
            src = dt * stepper.nonlinear_source(p_new)
            src[mask] = 0.0
            rhs = rhs_base + src
            if method == "psor":
                cand, iters = _psor(A, rhs, obstacle, p_new, dt,
                                    omega=omega, tol=psor_tol,
                                    max_sweeps=max_sweeps, scale=scale)
            else:
                cand, iters = _penalty(A, rhs, obstacle, p_new, dt,
                                       penalty=penalty)
            delta = float(np.max(np.abs(cand - p_new))) if it > 0 else np.inf
            p_new = cand
            if it > 0 and delta < stepper.picard_tol:
                break

        obstacle_worst = max(obstacle_worst, float(np.max(obstacle - p_new)))
        p_new = np.maximum(p_new, obstacle)  # exact obstacle after the solve
        if not np.all(np.isfinite(p_new)):
            raise SolverFailureError("VI solve diverged", {"step": k})

        r = _lcp_residual(A, p_new, rhs, obstacle, dt)
        comp_worst = max(comp_worst, float(np.max(np.abs(r[~mask]))))
        stepper.diagnostics.append({"step": k, "time": float(t),
                                    "solver_iters": iters, "picard_iters": it + 1})
        p = p_new
        values[k] = p.reshape(ns, ny)

    surface = PriceSurface(times=times, s=stepper.s, y=stepper.y, values=values,
                           gamma=gamma, mode=mode, params=params, prior=prior,
                           diagnostics=stepper.diagnostics)
    region = np.empty_like(values, dtype=bool)
    for k, t in enumerate(times):
        cp = c_plane(t)
        region[k] = (values[k] - cp <= region_tol) & (cp > 0)
    boundary = _extract_boundary(payoff, stepper.y, values, region)
    return AmericanResult(surface=surface, exercise_region=region,
                          boundary=boundary,
                          complementarity_residual=comp_worst,
                          obstacle_violation=obstacle_worst)


def _payoff_direction(payoff: PayoffSpec, y: np.ndarray) -> str:
    c = payoff(y)
    dc = np.diff(c)
    if np.all(dc <= 1e-12):
        return "put"
    if np.all(dc >= -1e-12):
        return "call"
    raise BoundaryUndefinedError("exercise boundary needs a monotone payoff")


def _extract_boundary(payoff, y, values, region) -> np.ndarray:
    direction = _payoff_direction(payoff, y)
    n_t, ns, _ = values.shape
    boundary = np.full((n_t, ns), np.nan)
    for it in range(n_t):
        for js in range(ns):
            idx = np.flatnonzero(region[it, js])
            if idx.size == 0:
                continue
            boundary[it, js] = y[idx.max()] if direction == "put" else y[idx.min()]
    return boundary


def exercise_boundary(result: AmericanResult, t: float) -> np.ndarray:
    """Critical price(s) at time t, one per s-slice (interpolated in time)."""
    times = result.surface.times
    it = int(np.clip(np.searchsorted(times, t), 0, len(times) - 1))
    return result.boundary[it]


@dataclass
class StoppingReport:
    """First-hit statistics of the exercise rule along simulated paths."""

    tau: np.ndarray
    exercised_fraction: float
    mean: float
    quantiles: dict = field(default_factory=dict)


def stopping_rule_check(result: AmericanResult, times: np.ndarray,
                        s_paths: np.ndarray, y_paths: np.ndarray,
                        payoff: PayoffSpec, tol: float = 1e-8) -> StoppingReport:
    """Exercise at the first grid time with p(t, S, Y) <= C(Y) + tol and
    positive intrinsic value; paths that never hit exercise at expiry.

    ``s_paths``/``y_paths`` have shape (n_paths, len(times)).
    """
    n_paths, n_t = y_paths.shape
    tau = np.full(n_paths, times[-1])
    done = np.zeros(n_paths, dtype=bool)
    for k, t in enumerate(times):
        c = payoff(y_paths[:, k])
        p = result.surface.price(t, s_paths[:, k], y_paths[:, k])
        hit = (~done) & (c > 0) & (p <= c + tol)
        tau[hit] = t
        done |= hit
    qs = {q: float(np.quantile(tau, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)}
    return StoppingReport(tau=tau, exercised_fraction=float(np.mean(done)),
                          mean=float(np.mean(tau)), quantiles=qs)
