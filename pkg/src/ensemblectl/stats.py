"""Terminal-state statistics: theoretical minimum MSE, Monte Carlo estimates
and the ensemble objectives J1 (error in the mean) and J2 (mean square error).

Parameter integrals use the quadrature weights of the :class:`ParameterGrid`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientTrials
from .model import EnsembleSystem, ParameterGrid, TimeGrid
from .sde import SimulationConfig, simulate_trials
from .transition import transition_tables

__all__ = ["theoretical_mse", "theoretical_mse_many", "free_mean", "EnsembleStatistics",
           "monte_carlo_stats", "SweepTable", "mse_sweep"]


def _noise_factor(sys):
    """Square root of the noise intensity matrix M (I or diag(lambda)), or None."""
    if sys.noise.kind == "none":
        return None
    if sys.noise.kind == "poisson":
        return np.sqrt(np.asarray(sys.noise.intensities))
    return np.ones(sys.k)


def theoretical_mse_many(sys: EnsembleSystem, T_eval, betas, quad_steps=8000, method="auto"):
    """tr C(T_eval, b) for each row of ``betas``.

    C(T, b) is the integral over [0, T] of Phi(T,s) G M G' Phi(T,s)' with
    M = I for Brownian and diag(lambda) for Poisson noise.  The integrand is
    sampled on a uniform grid and integrated by the composite trapezoid rule.
    """
    if quad_steps < 16:
        raise ValueError("quad_steps must be at least 16")
    betas = np.atleast_2d(np.asarray(betas, float))
    if betas.shape[1] != sys.d and betas.shape[0] == sys.d:
        betas = betas.T
    root = _noise_factor(sys)
    grid = TimeGrid(int(quad_steps), float(T_eval))
    nodes = grid.nodes
    out = np.zeros(len(betas))
    if root is None:
        return out
    w = np.full(grid.N + 1, grid.delta)
    w[0] = w[-1] = 0.5 * grid.delta
    for j, tab in enumerate(transition_tables(sys, grid, betas, method=method)):
        G = sys.coefficients(nodes, tab.beta, "G") * root[None, None, :]
        if not np.any(G):
            continue
        PG = tab.to_end() @ G
        out[j] = float(np.dot(w, np.einsum("kij,kij->k", PG, PG)))
    return out


def theoretical_mse(sys: EnsembleSystem, T_eval, beta, quad_steps=8000, method="auto"):
    """tr C(T_eval, beta): the MSE floor no open-loop control can remove."""
    return float(theoretical_mse_many(sys, T_eval, [np.atleast_1d(beta)], quad_steps, method)[0])


def free_mean(sys: EnsembleSystem, T_eval, beta, quad_steps=8000, method="auto"):
    """E X(T_eval) with zero control.

    Phi(T,0) X0, plus for Poisson noise the drift integral of
    Phi(T,s) G lambda over [0, T] (trapezoid rule).
    """
    beta = np.atleast_1d(np.asarray(beta, float))
    x0, _ = sys.boundary_states(beta)
    grid = TimeGrid(int(quad_steps), float(T_eval))
    tab = next(transition_tables(sys, grid, [beta], method=method))
    mean = tab.PhiT0 @ x0
    if sys.noise.kind == "poisson":
        lam = np.asarray(sys.noise.intensities)
        G = sys.coefficients(grid.nodes, beta, "G")
        vals = (tab.to_end() @ (G @ lam)[:, :, None])[:, :, 0]
        w = np.full(grid.N + 1, grid.delta)
        w[0] = w[-1] = 0.5 * grid.delta
        mean = mean + w @ vals
    return mean


@dataclass(frozen=True, eq=False)
class EnsembleStatistics:
    betas: np.ndarray            # (P, d)
    weights: np.ndarray          # (P,)
    trials: int
    mean_terminal: np.ndarray    # (P, n)
    mean_se: np.ndarray          # (P, n)
    targets: np.ndarray          # (P, n), XF(beta_j)
    mse_empirical: np.ndarray    # (P,)
    mse_se: np.ndarray           # (P,)
    mse_theory: Optional[np.ndarray] = None

    @property
    def J1(self):
        err = self.mean_terminal - self.targets
        return float(np.sqrt(np.dot(self.weights, np.sum(err * err, axis=1))))

    @property
    def J2_empirical(self):
        return float(np.dot(self.weights, self.mse_empirical))

    @property
    def J2_se(self):
        return float(np.sqrt(np.dot(self.weights ** 2, self.mse_se ** 2)))

    @property
    def J2_theory(self):
        if self.mse_theory is None:
            return float("nan")
        return float(np.dot(self.weights, self.mse_theory))

    def rows(self):
        """Per-parameter rows: beta..., mean x1..xn, mse, mse_se, mse_theory."""
        theory = self.mse_theory if self.mse_theory is not None else np.full(len(self.weights), np.nan)
        for b, mu, e, se, th in zip(self.betas, self.mean_terminal, self.mse_empirical,
                                    self.mse_se, theory):
            yield [*b, *mu, e, se, th]

    def header(self):
        d = self.betas.shape[1]
        beta = ["beta"] if d == 1 else [f"beta{i + 1}" for i in range(d)]
        n = self.mean_terminal.shape[1]
        return beta + [f"meanx{i + 1}" for i in range(n)] + ["mse", "mse_se", "mse_theory"]

    def to_csv(self, path):
        _write_csv(path, self.header(), self.rows())

    def summary_csv(self, path):
        _write_csv(path, ["J1", "J2_emp", "J2_theory"],
                   [[self.J1, self.J2_empirical, self.J2_theory]])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def _targets(XF_fn, pgrid):
    if isinstance(XF_fn, EnsembleSystem):
        sys = XF_fn
        return np.stack([sys.boundary_states(b)[1] for b in pgrid.points])
    return np.stack([np.atleast_1d(np.asarray(XF_fn(b), float)) for b in pgrid.points])


def monte_carlo_stats(terminals, XF_fn, pgrid: ParameterGrid, mse_theory=None):
    """Sample statistics of terminal states.

    ``terminals`` has shape (P, trials, n), one row of trials per parameter
    point of ``pgrid``.  ``XF_fn`` maps a parameter point to its target
    state; an :class:`EnsembleSystem` may be passed instead.
    """
    X = np.asarray(terminals, float)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.shape[0] != pgrid.P:
        raise ValueError(f"expected terminals for {pgrid.P} parameter points, got {X.shape[0]}")
    R = X.shape[1]
    if R < 2:
        raise InsufficientTrials(f"standard errors need at least 2 trials, got {R}")
    XF = _targets(XF_fn, pgrid)
    sq = np.sum((X - XF[:, None, :]) ** 2, axis=2)
    root_r = np.sqrt(R)
    theory = None if mse_theory is None else np.asarray(mse_theory, float)
    return EnsembleStatistics(
        betas=pgrid.points, weights=pgrid.weights, trials=R,
        mean_terminal=X.mean(axis=1), mean_se=X.std(axis=1, ddof=1) / root_r,
        targets=XF, mse_empirical=sq.mean(axis=1), mse_se=sq.std(axis=1, ddof=1) / root_r,
        mse_theory=theory)


@dataclass(frozen=True, eq=False)
class SweepTable:
    over: str                    # "beta" or "T"
    values: np.ndarray
    fixed: float
    mse_empirical: np.ndarray
    mse_se: np.ndarray
    mse_theory: np.ndarray
    trials: int

    def within(self, k=3.0):
        """Mask of sweep points whose |empirical - theory| is at most k standard errors."""
        return np.abs(self.mse_empirical - self.mse_theory) <= k * self.mse_se

    def to_csv(self, path):
        _write_csv(path, [self.over, "mse", "mse_se", "mse_theory"],
                   zip(self.values, self.mse_empirical, self.mse_se, self.mse_theory))


def mse_sweep(sys: EnsembleSystem, control, over, values, fixed, trials, scheme="em",
              seed=0, h=1e-3, quad_steps=8000, first_stream=0):
    """Empirical and theoretical terminal MSE along a parameter or horizon sweep.

    ``over="beta"`` evaluates at horizon ``fixed`` for each parameter value;
    ``over="T"`` evaluates at parameter ``fixed`` for each horizon.  The
    control is zero beyond its own grid, so horizons past the synthesis
    horizon see the free system.  Sweep point ``i`` uses random stream
    ``first_stream + i``.
    """
    if over not in ("beta", "T"):
        raise ValueError("over must be 'beta' or 'T'")
    values = np.asarray(values, float)
    if trials < 2:
        raise InsufficientTrials(f"standard errors need at least 2 trials, got {trials}")
    cfg = SimulationConfig(h=h, scheme=scheme, seed=seed, trials=int(trials), control=control)
    emp, se, theory = (np.empty(len(values)) for _ in range(3))
    for i, v in enumerate(values):
        beta, T_eval = (np.atleast_1d(v), float(fixed)) if over == "beta" else \
            (np.atleast_1d(fixed), float(v))
        batch = simulate_trials(sys, control, beta, cfg, stream=first_stream + i,
                                T_end=T_eval)
        _, xf = sys.boundary_states(beta)
        sq = np.sum((batch.terminals - xf) ** 2, axis=1)
        emp[i] = sq.mean()
        se[i] = sq.std(ddof=1) / np.sqrt(len(sq))
        theory[i] = theoretical_mse(sys, T_eval, beta, quad_steps)
    return SweepTable(over, values, float(fixed), emp, se, theory, int(trials))
