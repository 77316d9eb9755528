"""Downlink resource allocation for NOMA and SCMA heterogeneous networks."""

from .bench import SweepResult, SweepSpec, brute_force_oracle, emit, run_sweep
from .complexity import complexity_table, mpa_complexity, reference_rows, sic_complexity
from .config import SolverConfig
from .convex import agma_condense, scale_coeffs, subgradient_update
from .estimators import NomaAllocator, ScmaAllocator
from .gp import GpProblem, Posynomial, solve_gp
from .hetnet import ChannelState, NetworkConfig, generate_channels, generate_scenario, generate_topology
from .noma import noma_sum_rate, solve_noma
from .scma import enumerate_codebooks, scma_sum_rate, solve_scma

__version__ = "0.1.0"

__all__ = [
    "ChannelState",
    "GpProblem",
    "NetworkConfig",
    "NomaAllocator",
    "Posynomial",
    "ScmaAllocator",
    "SolverConfig",
    "SweepResult",
    "SweepSpec",
    "agma_condense",
    "brute_force_oracle",
    "complexity_table",
    "emit",
    "enumerate_codebooks",
    "generate_channels",
    "generate_scenario",
    "generate_topology",
    "mpa_complexity",
    "noma_sum_rate",
    "reference_rows",
    "run_sweep",
    "scale_coeffs",
    "scma_sum_rate",
    "sic_complexity",
    "solve_gp",
    "solve_noma",
    "solve_scma",
    "subgradient_update",
]
