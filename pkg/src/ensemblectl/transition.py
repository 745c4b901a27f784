"""State transition matrices of dX/dt = A(t, b) X.

Two routes are available: classical RK4 on the matrix ODE, and, when A does
not vary in time at the given parameter, the matrix exponential.  The
backward matrices Phi(0, t_k) are produced by integrating the adjoint
equation dPsi/dt = -Psi A forward from Psi(0) = I, one pass over the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import kernels
from .model import EnsembleSystem, TimeGrid

__all__ = ["TransitionTable", "is_time_invariant", "transition_forward",
           "transition_table", "transition_tables"]

METHODS = ("auto", "rk4", "expm")

# memory budget for one batch of tabulated coefficients / transition matrices
_CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True, eq=False)
class TransitionTable:
    beta: np.ndarray
    grid: TimeGrid
    Phi0t: np.ndarray   # (N+1, n, n), entry k = Phi(0, t_k)
    PhiT0: np.ndarray   # Phi(T, 0)

    def backward(self, k):
        """Phi(0, t_k)."""
        return self.Phi0t[k]

    def to_end(self):
        """Phi(T, t_k) for every node, shape (N+1, n, n)."""
        return self.PhiT0[None] @ self.Phi0t


def is_time_invariant(sys: EnsembleSystem, beta, tol=1e-14, horizon=None):
    """Sample A at three distinct times and compare entrywise."""
    T = sys.T if horizon is None else horizon
    A = sys.coefficients([0.0, 0.3819660112501051 * T, T], beta, "A")
    scale = np.maximum(1.0, np.abs(A[0]))
    return bool(np.all(np.abs(A[1:] - A[0]) <= tol * scale))


def _use_expm(sys, beta, method, horizon=None):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "auto":
        return is_time_invariant(sys, beta, horizon=horizon)
    return method == "expm"


def _half_times(t0, t1, steps):
    return t0 + (t1 - t0) * (np.arange(2 * steps + 1) / (2 * steps))


def transition_forward(sys, t1, t0, beta, steps=None, method="auto"):
    """Phi(t1, t0, beta).

    RK4 uses ``steps`` uniform steps between t0 and t1 (default: 4000 for a
    span equal to the system horizon, scaled by the span, at least 16);
    integration runs backward when t1 < t0.
    """
    beta = np.atleast_1d(np.asarray(beta, float))
    n = sys.n
    if t1 == t0:
        return np.eye(n)
    if _use_expm(sys, beta, method, horizon=max(t0, t1)):
        return expm((t1 - t0) * sys.coefficients([min(t0, t1)], beta, "A")[0])
    if steps is None:
        steps = max(16, math.ceil(4000 * abs(t1 - t0) / sys.T))
    A_half = sys.coefficients(_half_times(t0, t1, steps), beta, "A")
    out = kernels.propagate(A_half[None], (t1 - t0) / steps, steps, adjoint=False)
    return out[0, -1]


def _chunk_size(n, length):
    per = max(1, length * n * n * 8)
    return max(1, _CHUNK_BYTES // per)


def transition_tables(sys, grid, betas, substeps=1, method="auto"):
    """Yield a :class:`TransitionTable` per parameter point, in order.

    Points sharing a route are batched through the kernels; the parallel
    kernels keep the output order fixed.
    """
    betas = np.atleast_2d(np.asarray(betas, float))
    if betas.shape[1] != sys.d and betas.shape[0] == sys.d:
        betas = betas.T
    N, T, n = grid.N, grid.T, sys.n
    delta = grid.delta
    routes = [_use_expm(sys, b, method, horizon=T) for b in betas]
    batch = _chunk_size(n, 2 * N * substeps + 1)
    i = 0
    while i < len(betas):
        j = i
        while j < len(betas) and routes[j] == routes[i] and j - i < batch:
            j += 1
        chunk = betas[i:j]
        if routes[i]:
            A0 = np.stack([sys.coefficients([0.0], b, "A")[0] for b in chunk])
            E = np.stack([expm(-delta * a) for a in A0])
            Phi0t = kernels.matrix_powers(E, N)
            PhiT0 = np.stack([expm(T * a) for a in A0])
        else:
            times = _half_times(0.0, T, N * substeps)
            A_half = np.stack([sys.coefficients(times, b, "A") for b in chunk])
            h = T / (N * substeps)
            Phi0t = kernels.propagate(A_half, h, substeps, adjoint=True)
            PhiT0 = kernels.propagate(A_half, h, N * substeps, adjoint=False)[:, -1]
        for b, P0, PT in zip(chunk, Phi0t, PhiT0):
            P0[0] = np.eye(n)
            yield TransitionTable(b.copy(), grid, P0, PT)
        i = j


def transition_table(sys, grid, beta, substeps=1, method="auto"):
    """Phi(0, t_k, beta) for every grid node plus Phi(T, 0, beta)."""
    return next(transition_tables(sys, grid, [np.atleast_1d(beta)], substeps, method))
