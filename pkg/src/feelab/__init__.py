"""Dynamic posted-price transaction fee mechanisms.

Simulation of repeated block-space auctions, incentive oracles for bidders
and miners, and fixed-point tools for the expected price dynamics.
"""

__version__ = "0.1.0"

from .dynamics import TWDPP, UDPP, WDPP, DynamicMechanism, PriceState, UpdateParams
from .experiments import (
    BUILTIN_SCENARIOS,
    ConfigError,
    Converged,
    NotConverged,
    Oscillating,
    ScenarioConfig,
    classify_stability,
    detect_equilibrium_price,
    run_scenario,
    solve_equilibrium_price,
    welfare_bound_check,
)
from .config import load_config, save_config
from .fixedpoint import FixedPointProblem, iterate_to_fixed_point, mixture
from .game import GameConfig, MinerStrategy, check_ic_dsic, miner_best_deviation, run_game
from .market import Allocation, Bid, static_mechanism
from .values import Exponential, Pareto, PointMass, Uniform

__all__ = [
    "Allocation", "Bid", "BUILTIN_SCENARIOS", "ConfigError", "Converged", "DynamicMechanism", "Exponential",
    "FixedPointProblem", "GameConfig", "MinerStrategy", "NotConverged", "Oscillating", "Pareto", "PointMass",
    "PriceState", "ScenarioConfig", "TWDPP", "UDPP", "Uniform", "UpdateParams", "WDPP", "check_ic_dsic",
    "classify_stability", "detect_equilibrium_price", "iterate_to_fixed_point", "load_config",
    "miner_best_deviation", "mixture", "run_game", "run_scenario", "save_config", "solve_equilibrium_price",
    "static_mechanism", "welfare_bound_check",
]
