"""Batch front end.

Parses a YAML run configuration, dispatches to the pricers/simulators and
writes CSV/JSON artifacts plus a ``manifest.json`` with the config echo,
library versions, seeds and wall time.  Unknown configuration keys are
errors (fail fast).  Exit codes: 0 success, 2 config error, 3 solver
failure, 4 inconclusive statistical check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import yaml

from . import __version__, american, euro, filtering, hedging, market
from ._io import ensure_dir, write_csv, write_json
from .errors import ConfigError, InconclusiveError, SolverFailureError

SUBCOMMANDS = ("price-euro", "price-american", "marginal", "distortion",
               "expansion", "hedge-sim", "filter-demo", "corr-table")

# allowed keys per section; values are the defaults applied when missing
_SCHEMA = {
    "market": {"sigma_s": None, "sigma_y": None, "rho": None, "lambda_s": None,
               "lambda_y": None, "s0": 100.0, "y0": 100.0},
    "prior": {"lambda0_s": None, "lambda0_y": None, "z0_s": None, "z0_y": None},
    "preference": {"gamma": 0.5},
    "payoff": {"kind": "put", "strike": 100.0, "cap": None,
               "y_points": None, "c_points": None},
    "grid": {"n_s": 48, "n_y": 301, "n_t": 200, "n_std": 5.0, "log_space": True,
             "s_min": None, "s_max": None, "y_min": None, "y_max": None},
    "run": {"mode": "full", "horizon": 1.0},
    "sim": {"n_paths": 2000, "n_steps": 250, "seed": None, "policy": "optimal",
            "rebalance_every": 1, "lambda_mode": "true", "keep_ledger": False,
            "checkpoints": [0.25, 0.5, 0.75, 1.0]},
    "expansion": {"n_paths": 20000, "n_steps": 250, "seed": None},
    "corr": {"rhos": [0.0, 0.25, 0.5, 0.75, 0.9, 0.98, 1.0]},
    "filter_demo": {"n_paths": 50, "n_steps": 200, "seed": None},
    "american": {"method": "auto", "picard": 1},
    "solver": {"picard": 3, "theta": 0.5, "rannacher": 2},
    "output": {"max_surface_times": 21},
}


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = {}
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        allowed = _SCHEMA[section]
        for key in content:
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key}")
        cfg[section] = {**allowed, **content}
    for section, defaults in _SCHEMA.items():
        cfg.setdefault(section, dict(defaults))
    return cfg


def _require(cfg: dict, section: str, keys: list[str]) -> None:
    for k in keys:
        if cfg[section][k] is None:
            raise ConfigError(f"missing required key {section}.{k}")


def _market(cfg) -> market.MarketParams:
    _require(cfg, "market", ["sigma_s", "sigma_y", "rho", "lambda_s", "lambda_y"])
    m = cfg["market"]
    try:
        return market.MarketParams(
            sigma_s=float(m["sigma_s"]), sigma_y=float(m["sigma_y"]),
            rho=float(m["rho"]), lambda_s=float(m["lambda_s"]),
            lambda_y=float(m["lambda_y"]), s0=float(m["s0"]), y0=float(m["y0"]))
    except ValueError as e:
        raise ConfigError(f"market: {e}") from e


def _prior(cfg) -> filtering.PriorParams | None:
    p = cfg["prior"]
    if all(p[k] is None for k in ("lambda0_s", "lambda0_y", "z0_s", "z0_y")):
        return None
    _require(cfg, "prior", ["lambda0_s", "lambda0_y", "z0_s", "z0_y"])
    try:
        return filtering.PriorParams(
            lambda0_s=float(p["lambda0_s"]), lambda0_y=float(p["lambda0_y"]),
            z0_s=float(p["z0_s"]), z0_y=float(p["z0_y"]))
    except ValueError as e:
        raise ConfigError(f"prior: {e}") from e


def _mode(cfg) -> str:
    mode = cfg["run"]["mode"]
    if mode not in (euro.FULL_INFO, euro.PARTIAL_INFO):
        raise ConfigError(f"run.mode must be 'full' or 'partial', got {mode!r}")
    if mode == euro.PARTIAL_INFO and _prior(cfg) is None:
        raise ConfigError("run.mode 'partial' needs a prior section")
    return mode


def _payoff(cfg) -> euro.PayoffSpec:
    p = cfg["payoff"]
    try:
        if p["kind"] == "custom":
            if not p["y_points"] or not p["c_points"]:
                raise ConfigError("custom payoff needs payoff.y_points and payoff.c_points")
            return euro.tabulated(p["y_points"], p["c_points"], cap=p["cap"])
        if p["kind"] == "call":
            if p["cap"] is None:
                raise ConfigError("call payoff needs payoff.cap (finite exponential moment)")
            return euro.call(float(p["strike"]), float(p["cap"]))
        if p["kind"] == "put":
            return euro.put(float(p["strike"]))
    except ValueError as e:
        raise ConfigError(f"payoff: {e}") from e
    raise ConfigError(f"unknown payoff.kind {p['kind']!r}")


def _grid(cfg, params: market.MarketParams) -> euro.GridSpec:
    g = cfg["grid"]
    horizon = float(cfg["run"]["horizon"])
    try:
        if g["s_min"] is not None:
            _require(cfg, "grid", ["s_min", "s_max", "y_min", "y_max"])
            return euro.GridSpec(
                s_min=float(g["s_min"]), s_max=float(g["s_max"]),
                y_min=float(g["y_min"]), y_max=float(g["y_max"]),
                n_s=int(g["n_s"]), n_y=int(g["n_y"]), n_t=int(g["n_t"]),
                log_space=bool(g["log_space"]))
        return euro.GridSpec.around_spot(
            params, horizon, n_s=int(g["n_s"]), n_y=int(g["n_y"]),
            n_t=int(g["n_t"]), n_std=float(g["n_std"]),
            log_space=bool(g["log_space"]))
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from e


def _seed(cfg, section: str, override: int | None) -> int:
    if override is not None:
        return int(override)
    seed = cfg[section]["seed"]
    if seed is None:
        raise ConfigError(f"{section}.seed is mandatory for stochastic runs")
    return int(seed)


def _surface_csv(surface: euro.PriceSurface, path: str, max_times: int) -> None:
    """Export at most ``max_times`` evenly spaced time slices."""
    n_t = len(surface.times)
    idx = np.unique(np.linspace(0, n_t - 1, min(max_times, n_t)).round().astype(int))
    sub = euro.PriceSurface(
        times=surface.times[idx], s=surface.s, y=surface.y,
        values=surface.values[idx], gamma=surface.gamma, mode=surface.mode,
        params=surface.params, prior=surface.prior)
    sub.to_csv(path)


def _diagnostics_jsonl(diags: list, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in diags:
            f.write(json.dumps(d, sort_keys=True) + "\n")


# --- subcommand implementations ---------------------------------------------

def _cmd_price_euro(cfg, out, seed):
    params = _market(cfg)
    mode = _mode(cfg)
    surf = euro.solve_pde_euro(
        _payoff(cfg), _grid(cfg, params), float(cfg["preference"]["gamma"]), mode,
        _prior(cfg), params, float(cfg["run"]["horizon"]),
        theta=float(cfg["solver"]["theta"]), rannacher=int(cfg["solver"]["rannacher"]),
        picard=int(cfg["solver"]["picard"]))
    _surface_csv(surf, os.path.join(out, "surface.csv"),
                 int(cfg["output"]["max_surface_times"]))
    _diagnostics_jsonl(surf.diagnostics, os.path.join(out, "diagnostics.jsonl"))
    return {"price_at_spot": float(surf.price(0.0, params.s0, params.y0)),
            "artifacts": ["surface.csv", "diagnostics.jsonl"]}


def _cmd_marginal(cfg, out, seed):
    params = _market(cfg)
    mode = _mode(cfg)
    surf = euro.marginal_price(_payoff(cfg), _grid(cfg, params), mode, _prior(cfg),
                               params, float(cfg["run"]["horizon"]),
                               theta=float(cfg["solver"]["theta"]),
                               rannacher=int(cfg["solver"]["rannacher"]))
    _surface_csv(surf, os.path.join(out, "marginal_surface.csv"),
                 int(cfg["output"]["max_surface_times"]))
    return {"price_at_spot": float(surf.price(0.0, params.s0, params.y0)),
            "artifacts": ["marginal_surface.csv"]}


def _cmd_price_american(cfg, out, seed):
    params = _market(cfg)
    mode = _mode(cfg)
    res = american.solve_vi_american(
        _payoff(cfg), _grid(cfg, params), float(cfg["preference"]["gamma"]), mode,
        _prior(cfg), params, float(cfg["run"]["horizon"]),
        method=cfg["american"]["method"], picard=int(cfg["american"]["picard"]))
    _surface_csv(res.surface, os.path.join(out, "american_surface.csv"),
                 int(cfg["output"]["max_surface_times"]))
    res.boundary_to_csv(os.path.join(out, "boundary.csv"))
    res.region_to_csv(os.path.join(out, "region.csv"))
    _diagnostics_jsonl(res.surface.diagnostics, os.path.join(out, "diagnostics.jsonl"))
    return {"price_at_spot": float(res.surface.price(0.0, params.s0, params.y0)),
            "complementarity_residual": res.complementarity_residual,
            "obstacle_violation": res.obstacle_violation,
            "artifacts": ["american_surface.csv", "boundary.csv", "region.csv",
                          "diagnostics.jsonl"]}


def _cmd_distortion(cfg, out, seed):
    params = _market(cfg)
    price = euro.distortion_price(_payoff(cfg), 0.0, params.y0,
                                  float(cfg["preference"]["gamma"]), params,
                                  float(cfg["run"]["horizon"]))
    write_json(os.path.join(out, "distortion.json"),
               {"price": price, "t": 0.0, "y": params.y0,
                "gamma": float(cfg["preference"]["gamma"])})
    return {"price": price, "artifacts": ["distortion.json"]}


def _cmd_expansion(cfg, out, seed_override):
    params = _market(cfg)
    mode = _mode(cfg)
    seed = _seed(cfg, "expansion", seed_override)
    res = euro.expansion_price(
        _payoff(cfg), 0.0, params.s0, params.y0, float(cfg["preference"]["gamma"]),
        mode, _prior(cfg), params, float(cfg["run"]["horizon"]),
        n_paths=int(cfg["expansion"]["n_paths"]), seed=seed,
        n_steps=int(cfg["expansion"]["n_steps"]), grid=_grid(cfg, params))
    payload = {
        "p_marginal": res.p_marginal, "first_order_term": res.first_order_term,
        "expansion_value": res.expansion_value, "payoff_variance": res.payoff_variance,
        "gains_quadratic_variation": res.gains_quadratic_variation,
        "bracket": res.bracket, "bracket_se": res.bracket_se, "seed": seed,
    }
    write_json(os.path.join(out, "expansion.json"), payload)
    if res.bracket_se * 3 > 0.25 * abs(res.bracket):
        raise InconclusiveError("expansion bracket confidence interval too wide")
    return {**payload, "artifacts": ["expansion.json"]}


def _cmd_hedge_sim(cfg, out, seed_override):
    params = _market(cfg)
    mode = _mode(cfg)
    seed = _seed(cfg, "sim", seed_override)
    payoff = _payoff(cfg)
    grid = _grid(cfg, params)
    horizon = float(cfg["run"]["horizon"])
    gamma = float(cfg["preference"]["gamma"])
    prior = _prior(cfg)
    surf = euro.solve_pde_euro(payoff, grid, gamma, mode, prior, params, horizon,
                               picard=int(cfg["solver"]["picard"]))
    msurf = euro.marginal_price(payoff, grid, mode, prior, params, horizon)
    try:
        policy = hedging.HedgePolicy(kind=cfg["sim"]["policy"],
                                     rebalance_every=int(cfg["sim"]["rebalance_every"]))
    except ValueError as e:
        raise ConfigError(f"sim: {e}") from e
    sim = hedging.run_hedge_sim(
        params, prior, payoff, surf, policy, horizon,
        n_paths=int(cfg["sim"]["n_paths"]), n_steps=int(cfg["sim"]["n_steps"]),
        seed=seed, marginal_surface=msurf, lambda_mode=cfg["sim"]["lambda_mode"],
        checkpoints=tuple(cfg["sim"]["checkpoints"]),
        keep_ledger=bool(cfg["sim"]["keep_ledger"]))
    summary = sim.summary()
    summary["paerr_check"] = hedging.paerr_martingale_check(sim)
    summary["payoff_decomposition"] = hedging.payoff_decomposition_check(sim)
    summary["fss_decomposition"] = hedging.fss_decomposition_check(sim)
    summary["residual_risk_regression"] = sim.regression
    write_json(os.path.join(out, "hedge_summary.json"), summary)
    artifacts = ["hedge_summary.json"]
    if sim.ledger is not None:
        sim.ledger_to_csv(os.path.join(out, "ledger.csv"))
        artifacts.append("ledger.csv")
    return {"terminal_error_sd": summary["terminal_error"]["sd"],
            "artifacts": artifacts}


def _cmd_filter_demo(cfg, out, seed_override):
    params = _market(cfg)
    prior = _prior(cfg)
    if prior is None:
        raise ConfigError("filter-demo needs a prior section")
    seed = _seed(cfg, "filter_demo", seed_override)
    bundles = market.simulate_paths(params, float(cfg["run"]["horizon"]),
                                    int(cfg["filter_demo"]["n_steps"]),
                                    int(cfg["filter_demo"]["n_paths"]), seed)
    traces = [filtering.filter_trace(b, prior, params) for b in bundles]
    filtering.traces_to_csv(traces, os.path.join(out, "filter_trace.csv"))
    market.paths_to_csv(bundles, os.path.join(out, "paths.csv"))
    return {"n_paths": len(bundles), "artifacts": ["filter_trace.csv", "paths.csv"]}


def _cmd_corr_table(cfg, out, seed):
    rhos = cfg["corr"]["rhos"]
    hedging.correlation_table_csv(rhos, os.path.join(out, "corr_table.csv"))
    return {"rows": len(rhos), "artifacts": ["corr_table.csv"]}


_DISPATCH = {
    "price-euro": _cmd_price_euro,
    "price-american": _cmd_price_american,
    "marginal": _cmd_marginal,
    "distortion": _cmd_distortion,
    "expansion": _cmd_expansion,
    "hedge-sim": _cmd_hedge_sim,
    "filter-demo": _cmd_filter_demo,
    "corr-table": _cmd_corr_table,
}


def _acquire_lock(out: str) -> str:
    """Hold an exclusive lock file for the run's duration.

    A concurrent writer in the same directory is a configuration mistake;
    a stale file from a crashed run must be removed by hand.
    """
    path = os.path.join(out, ".crosshedge.lock")
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory is locked by another run ({path}); "
            "remove the file if that run crashed")
    with os.fdopen(fd, "w") as f:
        f.write(str(os.getpid()))
    return path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crosshedge",
        description="Indifference pricing and cross-hedging batch runner")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/LAPACK threads for this run")
    args = parser.parse_args(argv)

    started = time.time()
    limiter = None
    if args.threads is not None:
        try:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=max(1, args.threads))
        except ImportError:
            print("warning: threadpoolctl unavailable, --threads ignored",
                  file=sys.stderr)

    lock_path = None
    try:
        cfg = _load_config(args.config)
        out = ensure_dir(args.out or os.getcwd())
        lock_path = _acquire_lock(out)
        result = _DISPATCH[args.subcommand](cfg, out, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SolverFailureError as e:
        print(f"solver failure: {e} {e.diagnostics}", file=sys.stderr)
        return 3
    except InconclusiveError as e:
        print(f"inconclusive: {e}", file=sys.stderr)
        return 4
    finally:
        if limiter is not None:
            limiter.unregister()
        if lock_path is not None:
            try:
                os.unlink(lock_path)
            except OSError:
                pass

    manifest = {
        "subcommand": args.subcommand,
        "config": cfg,
        "seed_override": args.seed,
        "result": result,
        "versions": {
            "crosshedge": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "wall_time_s": time.time() - started,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    write_json(os.path.join(out, "manifest.json"), manifest)
    print(json.dumps({"subcommand": args.subcommand, **result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
