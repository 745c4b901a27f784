"""Backend selection for the numerical inner loops.

The compiled (numba) kernels are used when numba imports cleanly.  Set
``ENSEMBLECTL_BACKEND=numpy`` to force the pure-numpy path, or call
:func:`set_backend` at runtime.
"""

import os

from . import _numpy

try:
    import numba

    # prefer OpenMP: an outdated TBB runtime only produces a warning and a fallback
    if numba.config.THREADING_LAYER == "default":
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
    from . import _numba
except ImportError:  # pragma: no cover - numba missing
    _numba = None

_BACKENDS = {"numpy": _numpy}
if _numba is not None:
    _BACKENDS["numba"] = _numba

_active = None


def set_backend(name):
    global _active
    name = name.lower()
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def backend():
    """Name of the active backend."""
    return "numba" if _active is _numba and _numba is not None else "numpy"


def available():
    return sorted(_BACKENDS)


def set_threads(n):
    """Cap the worker threads of the compiled kernels; returns the count in effect."""
    if _numba is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


set_backend(os.environ.get("ENSEMBLECTL_BACKEND", "numba" if _numba is not None else "numpy"))


def propagate(A_half, h, substeps, adjoint):
    """RK4 for Y' = A Y (or Y' = -Y A when ``adjoint``) from Y = I.

    ``A_half`` holds A at every half step, shape (batch, 2M+1, n, n); the
    result keeps every ``substeps``-th step, shape (batch, M/substeps+1, n, n).
    """
    return _active.propagate(A_half, float(h), int(substeps), bool(adjoint))


def matrix_powers(E, N):
    """E^0 .. E^N for each matrix in the batch E (batch, n, n)."""
    return _active.matrix_powers(E, int(N))


def em(x0, A, f, G, h, dW, save=False):
    """Euler-Maruyama for a batch of trials sharing coefficients."""
    return _active.em(x0, A, f, G, float(h), dW, bool(save))


def sri15(x0, A, f0, f1, G, h, dW, dZ, save=False):
    """Order-1.5 strong scheme for additive noise, batch of trials."""
    return _active.sri15(x0, A, f0, f1, G, float(h), dW, dZ, bool(save))


def rk4(x0, times, A_node, A_mid, f_left, f_mid, f_right, jumps, save=False):
    """Classical RK4 on a (possibly nonuniform) grid with additive jumps at nodes."""
    return _active.rk4(x0, times, A_node, A_mid, f_left, f_mid, f_right, jumps, bool(save))
