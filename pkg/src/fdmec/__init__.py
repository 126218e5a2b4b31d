"""Energy-minimal resource allocation for wireless-powered NOMA mobile edge computing
with a full-duplex base station."""

from .baselines import BaselineKind, solve_noma_hd, solve_oma_fd
from .bcd import SolveReport, SolveSettings, solve
from .energy import Allocation, Instance, total_energy
from .units import GroupPartition, ScenarioSpec, SystemConfig, UserProfile, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BaselineKind", "GroupPartition", "Instance", "ScenarioSpec", "SolveReport",
    "SolveSettings", "SystemConfig", "UserProfile", "generate_scenario", "solve",
    "solve_noma_hd", "solve_oma_fd", "total_energy",
]
