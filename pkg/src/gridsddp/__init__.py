"""Multistage stochastic economic dispatch for grids with wind and storage.

Public surface: the grid data model and case parser (network), a
dual-aware LP layer with interchangeable kernels (lp), single-period
dispatch LP construction (stage), the AR wind process (wind), the SDDP
engine (sddp), the tabular DP baseline (dp), and the CLI (cli).
"""

from .network import (Bus, Generator, Line, Network, StorageDevice, WindFarm,
                      bus_incidence, parse_case, serialize_case, validate)
from .sddp import (BoundEstimate, Cut, CutPool, SddpConfig, SddpEngine,
                   backward_pass, compute_cut, forward_pass, run)
from .stage import (BreakpointGrid, StageDecision, StageOptions, SystemState,
                    build_breakpoints, build_stage_lp, extract_decision,
                    initial_state)
from .wind import WindModel, discretize, load_wind_model, save_wind_model, simulate, step

__version__ = "0.1.0"

__all__ = [
    "Bus", "Generator", "Line", "Network", "StorageDevice", "WindFarm",
    "bus_incidence", "parse_case", "serialize_case", "validate",
    "BoundEstimate", "Cut", "CutPool", "SddpConfig", "SddpEngine",
    "backward_pass", "compute_cut", "forward_pass", "run",
    "BreakpointGrid", "StageDecision", "StageOptions", "SystemState",
    "build_breakpoints", "build_stage_lp", "extract_decision", "initial_state",
    "WindModel", "discretize", "load_wind_model", "save_wind_model",
    "simulate", "step",
    "__version__",
]
