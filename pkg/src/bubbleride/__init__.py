"""Optimal bubble riding: N-player simulation and a mean field game solver with common noise."""

__version__ = "0.1.0"

from .config import (ScenarioConfig, ScenarioError, ValidationReport, Violation, load_scenario,
                     loads_scenario, save_scenario, shipped_scenario, validate)
from .noise import NoiseBundle, StreamRole, sample_exogenous_burst, sample_noise
from .price import PricePath, apply_burst_and_continue, simulate_pre_burst
from .trend import ExponentialTrend, LPPLTrend, trend_eval
from .costs import (CostParams, hamiltonian_argmin, minimized_hamiltonian_h, running_cost_f,
                    terminal_cost_g)
from .cells import (CellPartition, build_D_N, build_V_N, conditional_law, partition_paths,
                    project_dyadic)
from .ensemble import PathEnsemble, build_ensemble, compute_entries
from .flows import MeasureFlow, flow_distance
from .bsde import BsdeSolution, ControlField, extract_control_field, solve_bsde
from .fixed_point import (Equilibrium, apply_Phi, exploitability, girsanov_weights,
                          solve_equilibrium)
from .population import evaluate_player_cost, simulate_population
from .metrics import QuantileSketch, path_metric_dX, wasserstein1_1d

__all__ = [
    "ScenarioConfig", "ScenarioError", "ValidationReport", "Violation", "load_scenario",
    "loads_scenario", "save_scenario", "shipped_scenario", "validate",
    "NoiseBundle", "StreamRole", "sample_exogenous_burst", "sample_noise",
    "PricePath", "apply_burst_and_continue", "simulate_pre_burst",
    "ExponentialTrend", "LPPLTrend", "trend_eval",
    "CostParams", "hamiltonian_argmin", "minimized_hamiltonian_h", "running_cost_f",
    "terminal_cost_g",
    "CellPartition", "build_D_N", "build_V_N", "conditional_law", "partition_paths",
    "project_dyadic",
    "PathEnsemble", "build_ensemble", "compute_entries",
    "MeasureFlow", "flow_distance",
    "BsdeSolution", "ControlField", "extract_control_field", "solve_bsde",
    "Equilibrium", "apply_Phi", "exploitability", "girsanov_weights", "solve_equilibrium",
    "evaluate_player_cost", "simulate_population",
    "QuantileSketch", "path_metric_dX", "wasserstein1_1d",
]
