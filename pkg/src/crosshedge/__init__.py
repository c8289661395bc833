"""Utility-indifference valuation and cross-hedging of claims on a
non-traded asset under exponential forward preferences and filtered drift
uncertainty."""

__version__ = "0.1.0"

from .errors import (BoundaryUndefinedError, ConfigError, CrossHedgeError,
                     DivergenceError, EstimationDegenerateError,
                     InconclusiveError, SolverFailureError, StencilError,
                     UnsupportedRegimeError)
from .market import MarketParams, PathBundle, estimate_vol_corr, sharpe_ratio, \
    simulate_paths, years_for_confidence
from .filtering import FilterState, PriorParams, accumulate_tradeoff, \
    covariance_decay, filter_estimates, mpr_fields, observation_from_prices
from .forward_utility import PreferenceParams, UtilityKind, exponential, forward_performance, \
    general, logarithmic, merton_allocation, power, risk_tolerance, utility
from .euro import (FULL_INFO, PARTIAL_INFO, GridSpec, PayoffSpec, PriceSurface,
                   ValueSnapshot, call, distortion_price, expansion_price,
                   marginal_price, put, qm_generator_coeffs, solve_pde_euro,
                   tabulated, value_snapshot)
from .american import AmericanResult, exercise_boundary, solve_vi_american, \
    stopping_rule_check
from .hedging import (HedgePolicy, SimResult, correlation_sensitivity,
                      fss_decomposition_check, paerr_martingale_check,
                      payoff_decomposition_check, price_representation_check,
                      residual_risk_sde_check, run_hedge_sim)

__all__ = [name for name in dir() if not name.startswith("_")]
