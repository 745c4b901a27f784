"""Shared generators for small random ensembles."""

import numpy as np

from ensemblectl.model import EnsembleSystem, TimeGrid, uniform_parameter_grid
from ensemblectl.synthesis import discretize


def _lit(x):
    return repr(float(x))


def random_instance(seed, N=200):
    """A small ensemble with A(b) = A0 + b A1 and constant B, G; returns (sys, tgrid, pgrid)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 3))
    P = int(rng.integers(1, 6))
    A0 = rng.normal(size=(n, n))
    A1 = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    A = [[f"{_lit(A0[i, j])}+{_lit(A1[i, j])}*b" for j in range(n)] for i in range(n)]
    sys = EnsembleSystem.build(
        A=A, B=[[_lit(x) for x in row] for row in B], G=[["0.1"]] * n,
        K_bounds=[(-3.0, 3.0)], T=1.0,
        X0=[_lit(x) for x in rng.normal(size=n)], XF=[_lit(x) for x in rng.normal(size=n)])
    return sys, TimeGrid(N, 1.0), uniform_parameter_grid(sys.K_bounds, P)


def well_posed_instances(count, max_cond=1e3, start=0):
    """First ``count`` random instances whose operator has condition number below max_cond."""
    out = []
    seed = start
    while len(out) < count:
        sys, tg, pg = random_instance(seed)
        W, target = discretize(sys, tg, pg)
        s = np.linalg.svd(W, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] < max_cond:
            out.append((seed, sys, tg, pg, W, target))
        seed += 1
    return out


# criterion number -> "PASS/FAIL ..." line, printed in the terminal summary
ACCEPTANCE = {}


def record(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed
