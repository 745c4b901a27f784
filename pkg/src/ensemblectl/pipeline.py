"""End-to-end runs: discretize, factorize and synthesize, then simulate the ensemble."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .model import EnsembleSystem, ParameterGrid, TimeGrid
from .sde import SimulationConfig, simulate_trials
from .synthesis import (ControlSignal, Diagnostic, OperatorFactorization, TargetVector,
                        controllability_diagnostic, discretize, factorize, synthesize_control)

__all__ = ["SynthesisRun", "run_synthesis", "simulate_ensemble"]


@dataclass(frozen=True, eq=False)
class SynthesisRun:
    system: EnsembleSystem
    time_grid: TimeGrid
    param_grid: ParameterGrid
    W: np.ndarray
    target: TargetVector
    factorization: OperatorFactorization
    control: ControlSignal
    diagnostic: Diagnostic
    wall_time: float

    @property
    def q(self):
        return self.factorization.q

    @property
    def misfit(self):
        """W g - xi, the steering error predicted by the discretized model."""
        return self.W @ self.control.values.ravel() - self.target.xi

    def block_misfit(self):
        """Misfit reshaped to (P, n)."""
        return self.misfit.reshape(self.param_grid.P, self.system.n)

    @property
    def relative_residual(self):
        norm = np.linalg.norm(self.target.xi)
        return float(np.linalg.norm(self.misfit) / norm) if norm > 0 else 0.0

    @property
    def max_block_residual(self):
        return float(np.max(np.linalg.norm(self.block_misfit(), axis=1)))


def run_synthesis(system, time_grid, param_grid, q=None, max_condition=1e4, method="auto"):
    """Minimum-norm ensemble control for ``system`` on the given grids.

    With ``q=None`` the truncation count is the largest one whose condition
    ratio stays below ``max_condition``; an explicit ``q`` may not exceed P.
    """
    start = time.perf_counter()
    W, target = discretize(system, time_grid, param_grid, method=method)
    fact = factorize(W, system.m, q=q, max_condition=max_condition, q_max=param_grid.P)
    control = synthesize_control(fact, target, time_grid)
    diag = controllability_diagnostic(fact, target)
    return SynthesisRun(system, time_grid, param_grid, W, target, fact, control, diag,
                        time.perf_counter() - start)


def simulate_ensemble(system, control, betas, config: SimulationConfig, T_end=None):
    """Terminal states for every parameter point, shape (P, trials, n).

    Parameter point ``j`` draws from random stream ``j``.
    """
    betas = np.atleast_2d(np.asarray(betas, float))
    if betas.shape[1] != system.d:
        raise DimensionMismatch(f"parameter points have dimension {betas.shape[1]}, "
                                f"system has {system.d}")
    out = np.empty((len(betas), config.trials, system.n))
    counts = None
    for j, beta in enumerate(betas):
        batch = simulate_trials(system, control, beta, config, stream=j, T_end=T_end)
        out[j] = batch.terminals
        if batch.jump_counts is not None:
            counts = np.zeros((len(betas), config.trials), dtype=np.int64) if counts is None else counts
            counts[j] = batch.jump_counts
    return out, counts
