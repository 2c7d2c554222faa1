"""Bandwidth allocation between edge servers (price-setting leaders) and FL servers (followers)."""
from .baseline import run_baseline
from .centralized import run_centralized
from .core import (
    Allocation,
    InstanceError,
    NotCompetingError,
    SimOutcome,
    StrategyProfile,
    SystemInstance,
    check_constraints,
    is_competing_system,
    load_instance,
    dump_instance,
    proportional_result,
)
from .distributed import AgentParams, SimNetConfig, run_distributed
from .equilibrium import check_followers_ne, check_game_ne, solve_min_price, theorem_property_suite
from .harness import jain_index, run_scheme, sweep, utilization, weighted_fairness
from .scenarios import ScenarioSpec, build_instance, random_competing_instance

__version__ = "0.1.0"
