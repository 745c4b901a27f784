"""Ensemble system definition, discretization grids and the built-in examples."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidBounds, InvalidSystem, NonFiniteEntry, UnknownExample
from .expr import Expression, parse

__all__ = ["NoiseSpec", "EnsembleSystem", "TimeGrid", "ParameterGrid",
           "uniform_parameter_grid", "builtin_example", "EXAMPLES", "Preset"]

NOISE_KINDS = ("none", "brownian", "poisson")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "brownian"
    intensities: tuple = ()

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "intensities", tuple(float(x) for x in self.intensities))
        if kind not in NOISE_KINDS:
            raise InvalidSystem(f"unknown noise kind {self.kind!r}")
        if kind == "poisson" and any(not (lam >= 0) for lam in self.intensities):
            raise InvalidSystem("Poisson intensities must be nonnegative")

    @property
    def rate_matrix(self):
        """diag(lambda) for Poisson noise, identity otherwise (size taken from the rates)."""
        return np.diag(self.intensities)


def _expr_matrix(rows, d, label):
    out = []
    for row in rows:
        if isinstance(row, (str, int, float, Expression)):
            row = [row]
        out.append(tuple(x if isinstance(x, Expression) else parse(x, d) for x in row))
    if not out or len({len(r) for r in out}) != 1:
        raise InvalidSystem(f"{label} must be a non-empty rectangular matrix")
    return tuple(out)


def _expr_vector(items, d, label):
    if isinstance(items, (str, int, float, Expression)):
        items = [items]
    vec = tuple(x if isinstance(x, Expression) else parse(x, d) for x in items)
    if not vec:
        raise InvalidSystem(f"{label} must be non-empty")
    return vec


def _tabulate(entries, times, beta, label):
    """Evaluate an expression matrix on an array of times -> (len(times), r, c)."""
    times = np.asarray(times, dtype=float)
    rows, cols = len(entries), len(entries[0])
    out = np.empty((times.size, rows, cols))
    for i, j in itertools.product(range(rows), range(cols)):
        e = entries[i][j]
        if e.depends_on_time:
            out[:, i, j] = e.eval(times, beta)
        else:
            out[:, i, j] = e.eval(0.0, beta)
    if not np.all(np.isfinite(out)):
        k, i, j = np.argwhere(~np.isfinite(out))[0]
        raise NonFiniteEntry(label, int(i), int(j), float(times[k]), np.atleast_1d(beta))
    return out


@dataclass(frozen=True)
class EnsembleSystem:
    """dX = (A(t,b) X + B(t,b) u) dt + G(t,b) dS over b in a box K, t in [0, T].

    Matrices hold :class:`~ensemblectl.expr.Expression` entries; use
    :meth:`build` to create a system from expression strings.
    """

    A: tuple
    B: tuple
    G: tuple
    noise: NoiseSpec
    K_bounds: tuple
    T: float
    X0: tuple
    XF: tuple
    name: str = ""
    note: str = ""

    def __post_init__(self):
        n = len(self.A)
        if any(len(r) != n for r in self.A):
            raise InvalidSystem("A must be square")
        if len(self.B) != n or len(self.G) != n:
            raise InvalidSystem("A, B and G must have the same number of rows")
        if len(self.X0) != n or len(self.XF) != n:
            raise InvalidSystem(f"X0 and XF must have length {n}")
        if not self.T > 0:
            raise InvalidSystem("horizon T must be positive")
        for lo, hi in self.K_bounds:
            if not lo < hi:
                raise InvalidBounds(f"parameter bounds [{lo}, {hi}] are not increasing")
        if self.noise.kind == "poisson" and len(self.noise.intensities) != self.k:
            raise InvalidSystem(f"Poisson noise needs {self.k} intensities")
        d = self.d
        for mat in (self.A, self.B, self.G, (self.X0,), (self.XF,)):
            for e in itertools.chain.from_iterable(mat):
                if e.param_dim != d:
                    raise InvalidSystem("expression parameter dimension does not match K")
        for e in self.X0 + self.XF:
            if e.depends_on_time:
                raise InvalidSystem("boundary states may depend on the parameter only")

    @classmethod
    def build(cls, A, B, G, K_bounds, T, X0, XF, noise="brownian", intensities=(),
              name="", note=""):
        K_bounds = tuple((float(lo), float(hi)) for lo, hi in np.atleast_2d(np.asarray(K_bounds, float)))
        d = len(K_bounds)
        if isinstance(noise, str):
            noise = NoiseSpec(noise, intensities)
        return cls(A=_expr_matrix(A, d, "A"), B=_expr_matrix(B, d, "B"),
                   G=_expr_matrix(G, d, "G"), noise=noise, K_bounds=K_bounds,
                   T=float(T), X0=_expr_vector(X0, d, "X0"),
                   XF=_expr_vector(XF, d, "XF"), name=name, note=note)

    @property
    def n(self):
        return len(self.A)

    @property
    def m(self):
        return len(self.B[0])

    @property
    def k(self):
        return len(self.G[0])

    @property
    def d(self):
        return len(self.K_bounds)

    @property
    def time_varying(self):
        """True when any entry of A, B or G references ``t``."""
        return any(e.depends_on_time
                   for e in itertools.chain.from_iterable(self.A + self.B + self.G))

    def evaluate_matrices(self, t, beta):
        """A, B, G at one (t, beta) as float arrays."""
        A, B, G = (m[0] for m in self.coefficients([t], beta))
        return A, B, G

    def coefficients(self, times, beta, which="ABG"):
        """Tabulate the requested matrices at every time in ``times``."""
        mats = {"A": self.A, "B": self.B, "G": self.G}
        out = tuple(_tabulate(mats[c], times, beta, c) for c in which)
        return out if len(out) > 1 else out[0]

    def boundary_states(self, beta):
        """(X0(beta), XF(beta)) as float vectors."""
        x0 = _tabulate((self.X0,), [0.0], beta, "X0")[0, 0]
        xf = _tabulate((self.XF,), [0.0], beta, "XF")[0, 0]
        return x0, xf

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class TimeGrid:
    """Equispaced nodes t_k = k * delta, k = 0..N, with delta = T / N."""

    N: int
    T: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidSystem("time grid needs N >= 1 steps")
        if not self.T > 0:
            raise InvalidSystem("time grid horizon must be positive")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def delta(self):
        return self.T / self.N

    @property
    def nodes(self):
        t = np.arange(self.N + 1) * self.delta
        t[-1] = self.T
        return t


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    points: np.ndarray          # (P, d)
    weights: np.ndarray         # (P,)
    shape: tuple = field(default=())

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise InvalidBounds("one weight per parameter point is required")
        if np.any(w <= 0):
            raise InvalidBounds("quadrature weights must be positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if not self.shape:
            object.__setattr__(self, "shape", (w.size,))

    @property
    def P(self):
        return self.weights.size

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return self.P

    def __iter__(self):
        return iter(self.points)


def _axis_rule(lo, hi, P):
    if P == 1:
        return np.array([0.5 * (lo + hi)]), np.array([hi - lo])
    x = np.linspace(lo, hi, P)
    w = np.full(P, (hi - lo) / (P - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def uniform_parameter_grid(K_bounds, P):
    """Equispaced samples including both endpoints with trapezoid weights.

    ``P`` is a per-dimension count (an int is reused for every dimension);
    for d > 1 the grid is the tensor product, first dimension slowest.
    """
    K_bounds = [tuple(map(float, b)) for b in np.atleast_2d(np.asarray(K_bounds, float))]
    sizes = [int(P)] * len(K_bounds) if np.ndim(P) == 0 else [int(p) for p in P]
    if len(sizes) != len(K_bounds):
        raise InvalidBounds("one sample count per parameter dimension is required")
    for (lo, hi), p in zip(K_bounds, sizes):
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise InvalidBounds(f"invalid parameter interval [{lo}, {hi}]")
        if p < 1:
            raise InvalidBounds("need at least one sample per dimension")
    rules = [_axis_rule(lo, hi, p) for (lo, hi), p in zip(K_bounds, sizes)]
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=1), axis=1)
    return ParameterGrid(points, weights, tuple(sizes))


class Preset(NamedTuple):
    system: EnsembleSystem
    time_grid: TimeGrid
    param_grid: ParameterGrid
    q: Optional[int]


# default simulation settings per example: (scheme, h, trials)
SIMULATION_DEFAULTS = {
    "bm-oscillator": ("em", 5e-4, 400),
    "poisson-oscillator": ("poisson", 1e-3, 400),
    "scalar-tv": ("em", 1e-3, 100),
    "quantum-transport": ("sri15", 1e-3, 1000),
}

_OSC_A = [["0", "-b"], ["b", "0"]]
_OSC_B = [["1", "0"], ["0", "1"]]


def _bm_oscillator():
    sys = EnsembleSystem.build(
        A=_OSC_A, B=_OSC_B, G=[["0.1"], ["0.2"]], K_bounds=[(-10, 10)], T=1.0,
        X0=["1", "0"], XF=["0", "0"], noise="brownian", name="bm-oscillator",
        note="harmonic oscillator ensemble with frequency dispersion and Brownian noise")
    return Preset(sys, TimeGrid(40000, 1.0), uniform_parameter_grid(sys.K_bounds, 21), 5)


def _poisson_oscillator():
    sys = EnsembleSystem.build(
        A=_OSC_A, B=_OSC_B, G=[["0.05"], ["0.05"]], K_bounds=[(-10, 10)], T=1.0,
        X0=["1", "0"], XF=["0", "0"], noise="poisson", intensities=[20.0],
        name="poisson-oscillator",
        note="harmonic oscillator ensemble driven by a rate-20 Poisson counter")
    return Preset(sys, TimeGrid(40000, 1.0), uniform_parameter_grid(sys.K_bounds, 21), None)


def _scalar_tv():
    sys = EnsembleSystem.build(
        A=[["-sin(b*t)"]], B=[["1"]], G=[["1"]], K_bounds=[(-5, 5)], T=1.0,
        X0=["1"], XF=["0.2"], noise="brownian", name="scalar-tv",
        note="scalar time-varying system; MSE is also examined at horizons in [1, 3]")
    return Preset(sys, TimeGrid(20000, 1.0), uniform_parameter_grid(sys.K_bounds, 101), 9)


def _quantum_transport():
    sys = EnsembleSystem.build(
        A=[["0", "1", "0"], ["-b^2", "0", "b^2"], ["0", "0", "0"]],
        B=[["0"], ["0"], ["1"]], G=[["0"], ["0"], ["0.02"]], K_bounds=[(0.8, 1.0)],
        T=10.0, X0=["0", "0", "1"], XF=["0", "0", "0"], noise="brownian",
        name="quantum-transport",
        note="quantum transport ensemble; horizon T=10 (a figure elsewhere quotes "
             "40001 nodes on [0, 20]; the T=10 reading is used with N=40000)")
    return Preset(sys, TimeGrid(40000, 10.0), uniform_parameter_grid(sys.K_bounds, 101), None)


EXAMPLES = {
    "bm-oscillator": _bm_oscillator,
    "poisson-oscillator": _poisson_oscillator,
    "scalar-tv": _scalar_tv,
    "quantum-transport": _quantum_transport,
}


def builtin_example(name):
    """System, recommended grids and truncation count for a named example.

    ``q`` is None where no value is prescribed; rank selection then decides.
    """
    try:
        return EXAMPLES[name]()
    except KeyError:
        raise UnknownExample(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
