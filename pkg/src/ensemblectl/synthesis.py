"""Discretized input-to-state operator and minimum-norm ensemble control.

The operator maps a control sampled at the right end of each time step to
the stacked responses of every sampled ensemble member::

    W[j, k] = delta * Phi(0, t_k, b_j) @ B(t_k, b_j)      (n x m block)

Rows are grouped by parameter point, columns by time step.  A truncated
singular value expansion of W gives the minimum-norm control.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (ConvergenceFailure, DimensionMismatch, NoUsableRank,
                     OverdeterminedGrid, RankNotSelected)
from .model import EnsembleSystem, ParameterGrid, TimeGrid
from .transition import transition_tables

__all__ = ["TargetVector", "OperatorFactorization", "ControlSignal", "Diagnostic",
           "check_grid", "assemble_operator", "target_vector", "discretize", "svd",
           "select_rank", "factorize", "synthesize_control", "channel_controls",
           "controllability_diagnostic"]


@dataclass(frozen=True, eq=False)
class TargetVector:
    """Stacked targets Phi(0,T,b_j) XF(b_j) - X0(b_j), less the jump drift if any."""

    xi: np.ndarray
    weights: np.ndarray
    n: int
    drift: Optional[np.ndarray] = None

    def __len__(self):
        return self.xi.size

    def blocks(self):
        return self.xi.reshape(-1, self.n)

    def scaled(self, c):
        return TargetVector(c * self.xi, self.weights, self.n, self.drift)


@dataclass(frozen=True, eq=False)
class OperatorFactorization:
    W: np.ndarray
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    m: int
    q: Optional[int] = None

    @property
    def rank(self):
        return self.s.size

    @property
    def terms(self):
        """Number of singular triples used by the synthesis: min(m q, r)."""
        if self.q is None:
            raise RankNotSelected("select a truncation count q first")
        return min(self.m * self.q, self.rank)

    @property
    def condition_ratio(self):
        """s_1 / s_c for the smallest singular value actually used."""
        return float(self.s[0] / self.s[self.terms - 1])

    def with_rank(self, q):
        return OperatorFactorization(self.W, self.U, self.s, self.V, self.m, int(q))


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant control: values[k-1] holds on (t_{k-1}, t_k].

    Beyond the synthesis horizon the control is zero.
    """

    grid: TimeGrid
    values: np.ndarray   # (N, m)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N:
            raise DimensionMismatch(f"control has {v.shape[0]} samples for a grid of {self.grid.N} steps")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid, m):
        return cls(grid, np.zeros((grid.N, m)))

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.grid.nodes[1:]

    def norm(self):
        """Discrete L2 norm sqrt(sum_k delta |u_k|^2)."""
        return float(np.sqrt(self.grid.delta * np.sum(self.values ** 2)))

    def __call__(self, t):
        """u(t) for scalar or array t; shape (..., m)."""
        t = np.asarray(t, dtype=float)
        k = np.ceil(t / self.grid.delta).astype(np.int64)
        k = np.clip(k, 1, self.grid.N)
        out = self.values[k - 1]
        return np.where(((t >= 0) & (t <= self.grid.T))[..., None], out, 0.0)

    def integral(self, t):
        """Componentwise integral of u over [0, t]; exact for this interpolation."""
        nodes = self.grid.nodes
        cum = np.vstack([np.zeros(self.m), np.cumsum(self.values * self.grid.delta, axis=0)])
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.grid.T)
        return np.stack([np.interp(t, nodes, cum[:, c]) for c in range(self.m)], axis=-1)

    def breakpoints(self):
        return self.grid.nodes

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"u{c + 1}" for c in range(self.m)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        grid = TimeGrid(len(t), float(t[-1]))
        if not np.allclose(t, grid.nodes[1:], rtol=0, atol=1e-9 * grid.T):
            raise DimensionMismatch(f"{path}: control times are not an equispaced grid on (0, T]")
        return cls(grid, data[:, 1:])


@dataclass(frozen=True)
class Diagnostic:
    coefficients: np.ndarray   # xi' u_i / s_i
    partial_sums: np.ndarray   # cumulative sum of squared coefficients
    residual: float            # |xi - U U' xi| / |xi|


def check_grid(sys, tgrid, pgrid):
    n, m, P, N = sys.n, sys.m, pgrid.P, tgrid.N
    if pgrid.d != sys.d:
        raise DimensionMismatch(f"parameter grid has dimension {pgrid.d}, system has {sys.d}")
    if n * P > m * N:
        raise OverdeterminedGrid(
            f"grid is overdetermined: n*P = {n}*{P} = {n * P} exceeds m*N = {m}*{N} = {m * N}; "
            "the minimum-norm formulation requires n*P <= m*N")


def _operator_rows(sys, tgrid, tab):
    n, m, N = sys.n, sys.m, tgrid.N
    B = sys.coefficients(tgrid.nodes[1:], tab.beta, "B")
    blocks = tgrid.delta * (tab.Phi0t[1:] @ B)
    return blocks.transpose(1, 0, 2).reshape(n, N * m)


def _target_block(sys, tgrid, tab):
    x0, xf = sys.boundary_states(tab.beta)
    xi = tab.Phi0t[-1] @ xf - x0
    drift = np.zeros(sys.n)
    if sys.noise.kind == "poisson":
        lam = np.asarray(sys.noise.intensities)
        G = sys.coefficients(tgrid.nodes[1:], tab.beta, "G")
        drift = tgrid.delta * np.sum(tab.Phi0t[1:] @ (G @ lam)[:, :, None], axis=0)[:, 0]
    return xi - drift, drift


def _tables(sys, tgrid, pgrid, tables, substeps, method):
    if tables is None:
        return transition_tables(sys, tgrid, pgrid.points, substeps, method)
    return tables


def assemble_operator(sys, tgrid, pgrid, tables=None, substeps=1, method="auto"):
    """Block matrix W of shape (n P, m N)."""
    check_grid(sys, tgrid, pgrid)
    n = sys.n
    W = np.empty((n * pgrid.P, sys.m * tgrid.N))
    count = 0
    for j, tab in enumerate(_tables(sys, tgrid, pgrid, tables, substeps, method)):
        W[j * n:(j + 1) * n] = _operator_rows(sys, tgrid, tab)
        count += 1
    if count != pgrid.P:
        raise DimensionMismatch(f"got {count} transition tables for {pgrid.P} parameter points")
    return W


def target_vector(sys, pgrid, tables, tgrid, substeps=1, method="auto"):
    """Stacked steering targets, one n-block per parameter point."""
    blocks, drifts = [], []
    for tab in _tables(sys, tgrid, pgrid, tables, substeps, method):
        xi, drift = _target_block(sys, tgrid, tab)
        blocks.append(xi)
        drifts.append(drift)
    if len(blocks) != pgrid.P:
        raise DimensionMismatch(f"got {len(blocks)} transition tables for {pgrid.P} parameter points")
    xi = np.concatenate(blocks)
    if not np.all(np.isfinite(xi)):
        raise DimensionMismatch("target vector is not finite")
    drift = np.concatenate(drifts) if sys.noise.kind == "poisson" else None
    return TargetVector(xi, pgrid.weights, sys.n, drift)


def discretize(sys, tgrid, pgrid, substeps=1, method="auto"):
    """W and the target vector in a single pass over the parameter grid."""
    check_grid(sys, tgrid, pgrid)
    n = sys.n
    W = np.empty((n * pgrid.P, sys.m * tgrid.N))
    xi = np.empty(n * pgrid.P)
    drift = np.zeros(n * pgrid.P)
    for j, tab in enumerate(transition_tables(sys, tgrid, pgrid.points, substeps, method)):
        rows = slice(j * n, (j + 1) * n)
        W[rows] = _operator_rows(sys, tgrid, tab)
        xi[rows], drift[rows] = _target_block(sys, tgrid, tab)
    target = TargetVector(xi, pgrid.weights, n, drift if sys.noise.kind == "poisson" else None)
    return W, target


def svd(W):
    """Thin SVD restricted to the numerical rank.

    Columns are sign-normalized so that the largest-magnitude entry of each
    left singular vector is positive.
    """
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ConvergenceFailure("operator matrix has non-finite entries")
    try:
        U, s, Vt = scipy.linalg.svd(W, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(W, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(str(exc)) from exc
    if s.size == 0 or s[0] == 0:
        return U[:, :0], s[:0], Vt[:0].T
    r = int(np.sum(s > s[0] * max(W.shape) * np.finfo(float).eps))
    U, s, V = U[:, :r], s[:r], Vt[:r].T
    idx = np.argmax(np.abs(U), axis=0)
    sign = np.sign(U[idx, np.arange(r)])
    sign[sign == 0] = 1.0
    return U * sign, s, V * sign


def select_rank(s, max_condition=1e4, q_max=None, m=1):
    """Largest q with q <= q_max, m q <= len(s) and s_1 / s_{mq} < max_condition."""
    s = np.asarray(s, dtype=float)
    if s.size < m or not s[0] / s[m - 1] < max_condition:
        raise NoUsableRank(
            f"s_1/s_{m} = {s[0] / s[min(m, s.size) - 1]:.3g} already reaches the limit {max_condition:g}"
            if s.size >= 1 else "no positive singular values")
    q_hi = s.size // m
    if q_max is not None:
        q_hi = min(q_hi, int(q_max))
    q = 1
    while q < q_hi and s[0] / s[m * (q + 1) - 1] < max_condition:
        q += 1
    return q


def factorize(W, m, q=None, max_condition=1e4, q_max=None):
    """SVD of W with the truncation count chosen (or validated) for m channels."""
    U, s, V = svd(W)
    fact = OperatorFactorization(W, U, s, V, m)
    if q is None:
        q = select_rank(s, max_condition, q_max, m)
    elif q_max is not None and q > q_max:
        raise NoUsableRank(f"q = {q} exceeds the limit {q_max}")
    return fact.with_rank(q)


def _coefficients(fact, xi):
    xi = xi.xi if isinstance(xi, TargetVector) else np.asarray(xi, float)
    if xi.size != fact.U.shape[0]:
        raise DimensionMismatch(f"target has length {xi.size}, operator has {fact.U.shape[0]} rows")
    return fact.U.T @ xi / fact.s


def synthesize_control(fact, xi, grid):
    """Minimum-norm control from the leading min(m q, r) singular triples."""
    c = fact.terms
    g = fact.V[:, :c] @ _coefficients(fact, xi)[:c]
    return ControlSignal(grid, g.reshape(grid.N, fact.m))


def channel_controls(fact, xi, grid):
    """Per-channel view: channel i sums triples i, i+m, i+2m, ... (q of each).

    Returns an (m, N, m) array whose sum over the first axis is the
    synthesized control.
    """
    coef = _coefficients(fact, xi)
    out = np.zeros((fact.m, grid.N, fact.m))
    for i in range(fact.m):
        idx = np.arange(i, fact.terms, fact.m)
        out[i] = (fact.V[:, idx] @ coef[idx]).reshape(grid.N, fact.m)
    return out


def controllability_diagnostic(fact, xi):
    coef = _coefficients(fact, xi)
    xi = xi.xi if isinstance(xi, TargetVector) else np.asarray(xi, float)
    norm = np.linalg.norm(xi)
    residual = np.linalg.norm(xi - fact.U @ (fact.U.T @ xi)) / norm if norm > 0 else 0.0
    return Diagnostic(coef, np.cumsum(coef ** 2), float(residual))
