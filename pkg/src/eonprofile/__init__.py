"""Profile-service elastic optical network simulator."""

from .engine import ExperimentConfig, Scenario, TrialStats, run_experiment, run_trial
from .occupancy import BinRef, OccupancyStore
from .partition import PAPER_EXTRA_BINS_360, PartitionPlan, contribution_probability, plan_sip, plan_sp
from .rsa import ServiceProfile
from .topology import Network, deutsche_telekom, k_shortest_paths, load_network

__version__ = "0.1.0"

__all__ = [
    "BinRef",
    "ExperimentConfig",
    "Network",
    "OccupancyStore",
    "PAPER_EXTRA_BINS_360",
    "PartitionPlan",
    "Scenario",
    "ServiceProfile",
    "TrialStats",
    "contribution_probability",
    "deutsche_telekom",
    "k_shortest_paths",
    "load_network",
    "plan_sip",
    "plan_sp",
    "run_experiment",
    "run_trial",
]
