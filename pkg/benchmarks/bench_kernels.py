"""Time the compiled and pure-numpy kernels on workloads shaped like the examples.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel is run once to trigger compilation, then timed ``--repeat``
times; the best time is reported together with the numba speedup and the
largest difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from ensemblectl import kernels


def _oscillator_A(times, omega=5.0):
    A = np.zeros((times.size, 2, 2))
    A[:, 0, 1] = -omega
    A[:, 1, 0] = omega
    return A


def workloads(quick):
    rng = np.random.default_rng(0)
    S = 500 if quick else 2000
    trials = 50 if quick else 400
    N = 4000 if quick else 40000
    batch = 3 if quick else 21
    h = 1.0 / S

    half = np.linspace(0.0, 1.0, 2 * N + 1)
    A_half = np.stack([_oscillator_A(half, w) for w in np.linspace(-10, 10, batch)])

    nodes = np.linspace(0.0, 1.0, S + 1)
    A_nodes = _oscillator_A(nodes)
    G = np.tile([[0.1], [0.2]], (S + 1, 1, 1))
    f = np.stack([np.cos(nodes[:-1]), np.sin(nodes[:-1])], axis=1)
    dW = rng.standard_normal((trials, S, 1)) * np.sqrt(h)
    dZ = 0.5 * h * dW + rng.standard_normal((trials, S, 1)) * np.sqrt(h ** 3 / 12)
    x0 = np.array([1.0, 0.0])

    mids = 0.5 * (nodes[1:] + nodes[:-1])
    jumps = np.zeros((S + 1, 2))
    jumps[rng.integers(1, S, 20)] = [0.1, 0.05]
    f_mid = np.stack([np.cos(mids), np.sin(mids)], axis=1)
    f_right = np.stack([np.cos(nodes[1:]), np.sin(nodes[1:])], axis=1)

    return {
        f"propagate adjoint ({batch} x {N} steps)":
            lambda: kernels.propagate(A_half, 1.0 / N, 1, True),
        f"em ({trials} trials x {S} steps)":
            lambda: kernels.em(x0, A_nodes[:-1], f, G[:-1], h, dW)[0],
        f"sri15 ({trials} trials x {S} steps)":
            lambda: kernels.sri15(x0, A_nodes, f, f_right, G, h, dW, dZ)[0],
        f"rk4 with jumps ({trials} runs x {S} steps)":
            lambda: np.stack([kernels.rk4(x0, nodes, A_nodes, _oscillator_A(mids), f, f_mid,
                                          f_right, jumps)[0] for _ in range(trials)]),
    }


def best_time(fn, repeat):
    fn()  # warm-up (and compilation for numba)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    if "numba" not in kernels.available():
        raise SystemExit("numba is not importable; only the numpy backend is available")
    print(f"{'kernel':<40} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max diff':>10}")
    for name, fn in workloads(args.quick).items():
        timings, results = {}, {}
        for backend in ("numpy", "numba"):
            kernels.set_backend(backend)
            timings[backend], results[backend] = best_time(fn, args.repeat)
        diff = float(np.max(np.abs(results["numpy"] - results["numba"])))
        print(f"{name:<40} {timings['numpy']:>10.4f} {timings['numba']:>10.4f} "
              f"{timings['numpy'] / timings['numba']:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
