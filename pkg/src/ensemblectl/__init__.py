"""Open-loop control of parameterized ensembles of linear stochastic systems.

A single control u(t) is designed for a whole family of systems
dX = (A(t,b) X + B(t,b) u) dt + G(t,b) dS, b in a parameter box K, by a
truncated singular-value solution of the steering integral equation.
"""

from .errors import EnsembleError
from .expr import Expression, parse
from .model import (EnsembleSystem, NoiseSpec, ParameterGrid, TimeGrid, builtin_example,
                    uniform_parameter_grid)
from .pipeline import SynthesisRun, run_synthesis, simulate_ensemble
from .sde import SimulationConfig, simulate_trials
from .stats import (EnsembleStatistics, monte_carlo_stats, mse_sweep, theoretical_mse,
                    theoretical_mse_many)
from .synthesis import ControlSignal, discretize, factorize, synthesize_control

__version__ = "0.1.0"

__all__ = ["EnsembleError", "Expression", "parse", "EnsembleSystem", "NoiseSpec",
           "ParameterGrid", "TimeGrid", "builtin_example", "uniform_parameter_grid",
           "ControlSignal", "discretize", "factorize", "synthesize_control", "SynthesisRun",
           "run_synthesis", "simulate_ensemble", "SimulationConfig", "simulate_trials",
           "EnsembleStatistics", "monte_carlo_stats", "mse_sweep", "theoretical_mse",
           "theoretical_mse_many"]
