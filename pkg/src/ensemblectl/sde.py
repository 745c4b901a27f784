"""Controlled trajectories of single ensemble members.

Schemes
-------
rk4      noise-free classical RK4; steps land on every control breakpoint
em       Euler-Maruyama for additive Brownian noise
sri15    order-1.5 strong scheme for additive Brownian noise
poisson  RK4 between exactly sampled jump times of independent Poisson counters

Random numbers come from counter-based Philox streams.  Trial ``r`` of
stream ``j`` (usually the parameter index) under seed ``s`` always draws the
same numbers, however the trials are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import InvalidStep, NonFiniteState, SimulationError
from .model import EnsembleSystem
from .synthesis import ControlSignal

__all__ = ["SCHEMES", "SimulationConfig", "TrajectorySample", "TrialBatch",
           "trial_generator", "simulate_deterministic", "simulate_brownian_em",
           "simulate_brownian_sri15", "simulate_poisson", "simulate_trials",
           "poisson_arrivals"]

SCHEMES = ("rk4", "em", "sri15", "poisson")

_NOISE_BYTES = 32 * 2**20
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimulationConfig:
    h: float
    scheme: str = "em"
    seed: int = 0
    trials: int = 1
    control: Optional[ControlSignal] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SimulationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.h > 0:
            raise InvalidStep("step size must be positive")
        if self.trials < 1:
            raise SimulationError("need at least one trial")


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    beta: np.ndarray
    times: np.ndarray
    states: np.ndarray
    jump_times: Optional[np.ndarray] = None

    @property
    def terminal(self):
        return self.states[-1]


@dataclass(frozen=True, eq=False)
class TrialBatch:
    beta: np.ndarray
    trials: np.ndarray          # trial indices
    terminals: np.ndarray       # (trials, n)
    jump_counts: Optional[np.ndarray] = None


def trial_generator(seed, trial, stream=0):
    """Generator for one (seed, stream, trial) triple.

    The key is (seed, stream) and the trial index occupies the top word of the
    256-bit Philox counter, so trials never share counter values.
    """
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(trial) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def step_count(T, h):
    S = int(round(T / h))
    if S < 1 or abs(S * h - T) > 1e-12 * T:
        raise InvalidStep(f"step {h!r} does not divide the horizon {T!r}")
    return S


def _control(sys, control):
    if control is None:
        return None
    if control.m != sys.m:
        raise SimulationError(f"control has {control.m} channels, system has {sys.m}")
    return control


def _mean_control(control, times, m):
    """Step averages of u over [times[s], times[s+1]], shape (S, m)."""
    if control is None:
        return np.zeros((len(times) - 1, m))
    cum = control.integral(times)
    return np.diff(cum, axis=0) / np.diff(times)[:, None]


def _check(ok, beta, what):
    if not np.all(ok):
        raise NonFiniteState(f"{what} state exceeded 1e12 in magnitude at beta={list(beta)!r}")


def _merge(*arrays, tol):
    t = np.unique(np.concatenate(arrays))
    keep = np.concatenate([[True], np.diff(t) > tol])
    return t[keep]


def _rk4_grid(control, h, T_end):
    S = step_count(T_end, h)
    base = np.arange(S + 1) * h
    base[-1] = T_end
    if control is None:
        return base
    bp = control.breakpoints()
    bp = bp[bp < T_end]
    t = _merge(base, bp, tol=1e-9 * min(h, control.grid.delta))
    t[-1] = T_end
    return t


@dataclass(frozen=True, eq=False)
class _Stages:
    """Coefficients at RK4 stage points of a grid; u is constant per interval."""

    times: np.ndarray
    A_node: np.ndarray
    A_mid: np.ndarray
    u: np.ndarray
    f_left: np.ndarray
    f_mid: np.ndarray
    f_right: np.ndarray

    def arrays(self):
        return self.A_node, self.A_mid, self.f_left, self.f_mid, self.f_right


def _forcing(sys, control, times, mids, u, beta):
    if control is None:
        z = np.zeros((len(mids), sys.n))
        return z, z, z
    B_node = sys.coefficients(times, beta, "B")
    B_mid = sys.coefficients(mids, beta, "B")
    return (np.einsum("sij,sj->si", B_node[:-1], u),
            np.einsum("sij,sj->si", B_mid, u),
            np.einsum("sij,sj->si", B_node[1:], u))


def _stages(sys, control, times, beta):
    mids = 0.5 * (times[:-1] + times[1:])
    A_node = sys.coefficients(times, beta, "A")
    A_mid = sys.coefficients(mids, beta, "A")
    u = control(mids) if control is not None else np.zeros((len(mids), sys.m))
    return _Stages(times, A_node, A_mid, u, *_forcing(sys, control, times, mids, u, beta))


def _refine(sys, control, base, events, beta):
    """Insert event times into a stage grid, re-evaluating only split intervals."""
    ev = np.unique(events)
    pos = np.searchsorted(base.times, ev)
    on_node = (pos < len(base.times)) & (base.times[np.minimum(pos, len(base.times) - 1)] == ev)
    ev, pos = ev[~on_node], pos[~on_node]
    if ev.size == 0:
        return base
    times = np.insert(base.times, pos, ev)
    new = np.zeros(len(times), dtype=bool)
    new[pos + np.arange(ev.size)] = True
    # merged node i sits at or just after base node i - (new nodes up to i)
    node_map = np.arange(len(times)) - np.cumsum(new)
    parent = node_map[:-1]
    split = np.flatnonzero(new[:-1] | new[1:])
    mids = 0.5 * (times[split] + times[split + 1])
    node_map = np.where(new, 0, node_map)

    def gather(arr, idx):
        return np.take(arr, idx, axis=0)

    A_node = gather(base.A_node, node_map)
    A_node[new] = sys.coefficients(times[new], beta, "A")
    A_mid = gather(base.A_mid, parent)
    A_mid[split] = sys.coefficients(mids, beta, "A")
    u = gather(base.u, parent)
    f_left, f_mid, f_right = (gather(f, parent) for f in (base.f_left, base.f_mid, base.f_right))
    if control is not None:
        ur = u[split]
        for f, at in ((f_left, times[split]), (f_mid, mids), (f_right, times[split + 1])):
            f[split] = np.einsum("sij,sj->si", sys.coefficients(at, beta, "B"), ur)
    return _Stages(times, A_node, A_mid, u, f_left, f_mid, f_right)


def simulate_deterministic(sys, control, beta, h, T_end=None, save=True):
    """Noise-free trajectory by classical RK4 (G is ignored)."""
    beta = np.atleast_1d(np.asarray(beta, float))
    control = _control(sys, control)
    T_end = sys.T if T_end is None else float(T_end)
    times = _rk4_grid(control, h, T_end)
    stages = _stages(sys, control, times, beta)
    x0, _ = sys.boundary_states(beta)
    states, ok = kernels.rk4(x0, times, *stages.arrays(), np.zeros((len(times), sys.n)), save)
    _check(ok, beta, "deterministic")
    return TrajectorySample(beta, times if save else times[-1:], states)


def poisson_arrivals(rng, rates, T_end):
    """Arrival times in (0, T_end] for each counter, from exponential gaps."""
    out = []
    for lam in rates:
        if lam <= 0:
            out.append(np.empty(0))
            continue
        chunk = int(lam * T_end + 10 * math.sqrt(lam * T_end) + 10)
        times = np.empty(0)
        last = 0.0
        while last <= T_end:
            gaps = rng.exponential(1.0 / lam, size=chunk)
            new = last + np.cumsum(gaps)
            times = np.concatenate([times, new])
            last = new[-1]
        out.append(times[times <= T_end])
    return out


def _poisson_one(sys, control, beta, base, x0, rng, T_end, save):
    rates = sys.noise.intensities
    arrivals = poisson_arrivals(rng, rates, T_end)
    events = np.concatenate(arrivals) if arrivals else np.empty(0)
    stages = _refine(sys, control, base, events, beta) if events.size else base
    times = stages.times
    jumps = np.zeros((len(times), sys.n))
    for i, at in enumerate(arrivals):
        if at.size == 0:
            continue
        G = sys.coefficients(at, beta, "G")
        idx = np.searchsorted(times, at)
        np.add.at(jumps, idx, G[:, :, i])
    states, ok = kernels.rk4(x0, times, *stages.arrays(), jumps, save)
    _check(ok, beta, "Poisson")
    counts = sum(a.size for a in arrivals)
    return times, states, events, counts


def simulate_poisson(sys, control, beta, seed, h, trial=0, stream=0, T_end=None, save=True):
    """One trajectory with Poisson jumps; RK4 between events."""
    if sys.noise.kind != "poisson":
        raise SimulationError("system noise is not Poisson")
    beta = np.atleast_1d(np.asarray(beta, float))
    control = _control(sys, control)
    T_end = sys.T if T_end is None else float(T_end)
    base = _stages(sys, control, _rk4_grid(control, h, T_end), beta)
    x0, _ = sys.boundary_states(beta)
    rng = trial_generator(seed, trial, stream)
    times, states, events, _ = _poisson_one(sys, control, beta, base, x0, rng, T_end, save)
    return TrajectorySample(beta, times if save else times[-1:], states, np.sort(events))


def _uniform_setup(sys, control, beta, h, T_end):
    S = step_count(T_end, h)
    times = np.arange(S + 1) * h
    times[-1] = T_end
    A, B, G = sys.coefficients(times, beta, "ABG")
    ubar = _mean_control(control, times, sys.m)
    return S, times, A, B, G, ubar


def _brownian_batch(sys, control, beta, h, seed, trials, stream, T_end, scheme, save):
    S, times, A, B, G, ubar = _uniform_setup(sys, control, beta, h, T_end)
    x0, _ = sys.boundary_states(beta)
    k = sys.k
    per_trial = S * k * (2 if scheme == "sri15" else 1) * 8
    chunk = max(1, _NOISE_BYTES // per_trial)
    out = []
    if scheme == "em":
        f = np.einsum("sij,sj->si", B[:-1], ubar)
        A_s, G_s = np.ascontiguousarray(A[:-1]), np.ascontiguousarray(G[:-1])
    else:
        f0 = np.einsum("sij,sj->si", B[:-1], ubar)
        f1 = np.einsum("sij,sj->si", B[1:], ubar)
    sqh = math.sqrt(h)
    for start in range(0, len(trials), chunk):
        idx = trials[start:start + chunk]
        if scheme == "em":
            dW = np.stack([trial_generator(seed, r, stream).standard_normal((S, k)) for r in idx])
            states, ok = kernels.em(x0, A_s, f, G_s, h, dW * sqh, save)
        else:
            xi = np.stack([trial_generator(seed, r, stream).standard_normal((S, 2, k)) for r in idx])
            dW = xi[:, :, 0] * sqh
            dZ = 0.5 * h * sqh * (xi[:, :, 0] + xi[:, :, 1] / math.sqrt(3.0))
            states, ok = kernels.sri15(x0, A, f0, f1, G, h, np.ascontiguousarray(dW),
                                       np.ascontiguousarray(dZ), save)
        _check(ok, beta, scheme)
        out.append(states)
    return times, np.concatenate(out)


def _brownian_single(sys, control, beta, h, seed, trial, stream, T_end, scheme):
    if sys.noise.kind != "brownian":
        raise SimulationError("system noise is not Brownian")
    beta = np.atleast_1d(np.asarray(beta, float))
    control = _control(sys, control)
    T_end = sys.T if T_end is None else float(T_end)
    times, states = _brownian_batch(sys, control, beta, h, seed, np.array([trial]), stream,
                                    T_end, scheme, True)
    return TrajectorySample(beta, times, states[0])


def simulate_brownian_em(sys, control, beta, h, seed, trial=0, stream=0, T_end=None):
    """One Euler-Maruyama trajectory.

    The control enters through its exact average over each step.
    """
    return _brownian_single(sys, control, beta, h, seed, trial, stream, T_end, "em")


def simulate_brownian_sri15(sys, control, beta, h, seed, trial=0, stream=0, T_end=None):
    """One trajectory of the order-1.5 additive-noise scheme.

    Per step the pair (dW, dZ) has Var dW = h, Var dZ = h^3/3 and
    Cov = h^2/2; the update is a drift trapezoid over an Euler predictor plus
    the A G dZ correction.
    """
    return _brownian_single(sys, control, beta, h, seed, trial, stream, T_end, "sri15")


def simulate_trials(sys, control, beta, config, stream=0, T_end=None, first_trial=0):
    """Terminal states of ``config.trials`` independent trials at one parameter point."""
    beta = np.atleast_1d(np.asarray(beta, float))
    control = _control(sys, control if control is not None else config.control)
    T_end = sys.T if T_end is None else float(T_end)
    trials = np.arange(first_trial, first_trial + config.trials)
    scheme = config.scheme
    if scheme in ("em", "sri15"):
        if sys.noise.kind != "brownian":
            raise SimulationError(f"scheme {scheme!r} needs Brownian noise")
        _, states = _brownian_batch(sys, control, beta, config.h, config.seed, trials, stream,
                                    T_end, scheme, False)
        return TrialBatch(beta, trials, states[:, 0])
    if scheme == "rk4":
        sample = simulate_deterministic(sys, control, beta, config.h, T_end, save=False)
        return TrialBatch(beta, trials, np.repeat(sample.states[-1:], len(trials), axis=0))
    if sys.noise.kind != "poisson":
        raise SimulationError("scheme 'poisson' needs Poisson noise")
    base = _stages(sys, control, _rk4_grid(control, config.h, T_end), beta)
    x0, _ = sys.boundary_states(beta)
    terminals = np.empty((len(trials), sys.n))
    counts = np.empty(len(trials), dtype=np.int64)
    for i, r in enumerate(trials):
        rng = trial_generator(config.seed, r, stream)
        _, states, _, counts[i] = _poisson_one(sys, control, beta, base, x0, rng, T_end, False)
        terminals[i] = states[-1]
    return TrialBatch(beta, trials, terminals, counts)
