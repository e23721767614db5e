"""Risk-bounded chain routing for pipelined inference over unreliable peers."""

__version__ = "0.1.0"

from .ledger import CachedView, LedgerParams, PeerRecord, Registry, apply_feedback, sync_view
from .router import Algorithm, ChainPlan, RouteQuery, brute_force_oracle, find_replacement, route
from .scenario import ScenarioConfig, build_scenario, load_config
from .sim import RequestOutcome, run_experiment
from .topology import ModelSpec, RiskBudget, trust_floor

__all__ = [
    "Algorithm", "CachedView", "ChainPlan", "LedgerParams", "ModelSpec", "PeerRecord", "Registry",
    "RequestOutcome", "RiskBudget", "RouteQuery", "ScenarioConfig", "apply_feedback",
    "brute_force_oracle", "build_scenario", "find_replacement", "load_config", "route",
    "run_experiment", "sync_view", "trust_floor",
]
