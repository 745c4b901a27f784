import numpy as np
import pytest

from ensemblectl import builtin_example
from ensemblectl.checks import closed_form_scalar_tv
from ensemblectl.model import EnsembleSystem, TimeGrid
from ensemblectl.transition import (is_time_invariant, transition_forward, transition_table,
                                    transition_tables)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.mark.parametrize("method", ["expm", "rk4"])
def test_oscillator_transition_is_a_rotation(example1, method):
    sys = example1.system
    for w in (-10.0, -3.0, 0.0, 4.5, 10.0):
        phi = transition_forward(sys, 0.8, 0.1, [w], method=method)
        np.testing.assert_allclose(phi, rotation(0.7 * w), rtol=0, atol=1e-10)


def test_closed_form_scalar_random_triples(example3, rng):
    sys = example3.system
    worst = 0.0
    for _ in range(100):
        t, t0 = rng.uniform(0, 3, 2)
        b = rng.uniform(-5, 5)
        phi = transition_forward(sys, t, t0, [b])[0, 0]
        worst = max(worst, abs(phi - closed_form_scalar_tv(t, t0, b)))
    assert worst <= 1e-6


def test_closed_form_zero_parameter(example3):
    assert transition_forward(example3.system, 0.9, 0.2, [0.0])[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_semigroup_and_inverse(example3, rng):
    varying = EnsembleSystem.build(
        A=[["0", "1", "0"], ["-b^2", "0", "b^2*cos(t)"], ["0", "sin(b*t)", "0"]],
        B=[["0"]] * 3, G=[["0"]] * 3, K_bounds=[(0.8, 1.0)], T=10.0,
        X0=["0"] * 3, XF=["0"] * 3)
    for system in (example3.system, varying):
        for _ in range(5):
            t0, t1, t2 = np.sort(rng.uniform(0, system.T, 3))
            b = [rng.uniform(*system.K_bounds[0])]
            p20 = transition_forward(system, t2, t0, b)
            p21 = transition_forward(system, t2, t1, b)
            p10 = transition_forward(system, t1, t0, b)
            assert np.max(np.abs(p20 - p21 @ p10)) <= 1e-8
            back = transition_forward(system, t0, t2, b)
            assert np.max(np.abs(back @ p20 - np.eye(system.n))) <= 1e-8


def test_rk4_order_on_scalar_example(example3):
    """Sup-norm error of the tabulated backward matrices against the closed form."""
    sys = example3.system
    steps = np.array([16, 32, 64, 128, 256])
    errors = []
    for N in steps:
        grid = TimeGrid(int(N), sys.T)
        worst = 0.0
        for tab in transition_tables(sys, grid, [[1.0], [2.0], [-3.5], [5.0]], method="rk4"):
            b = tab.beta[0]
            ref = np.exp((1.0 - np.cos(b * grid.nodes)) / b)  # Phi(0, t)
            worst = max(worst, np.max(np.abs(tab.Phi0t[:, 0, 0] - ref)))
        errors.append(worst)
    order = -np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert 3.5 <= order <= 4.5, (errors, order)


def test_expm_and_rk4_tables_agree(example1):
    sys = example1.system
    grid = TimeGrid(2000, 1.0)
    for w in (-10.0, 2.0, 7.5):
        a = transition_table(sys, grid, [w], method="expm")
        b = transition_table(sys, grid, [w], method="rk4")
        assert np.max(np.abs(a.Phi0t - b.Phi0t)) <= 1e-9
        assert np.max(np.abs(a.PhiT0 - b.PhiT0)) <= 1e-9


def test_table_matches_forward_and_end_map(example3):
    sys = example3.system
    grid = TimeGrid(400, 1.0)
    tab = transition_table(sys, grid, [2.0])
    for k in (0, 57, 400):
        ref = transition_forward(sys, 0.0, grid.nodes[k], [2.0], steps=4000)
        assert abs(tab.backward(k)[0, 0] - ref[0, 0]) <= 1e-10
    end = tab.to_end()
    assert end[-1, 0, 0] == pytest.approx(1.0, abs=1e-12)
    assert end[0, 0, 0] == pytest.approx(closed_form_scalar_tv(1.0, 0.0, 2.0), abs=1e-10)


def test_batched_tables_match_single(example3):
    sys = example3.system
    grid = TimeGrid(200, 1.0)
    betas = [[-5.0], [-1.0], [0.0], [3.3]]
    batched = list(transition_tables(sys, grid, betas))
    for b, tab in zip(betas, batched):
        single = transition_table(sys, grid, b)
        np.testing.assert_array_equal(tab.Phi0t, single.Phi0t)
        assert tab.beta[0] == b[0]


def test_time_invariance_detection(example1, example3):
    assert is_time_invariant(example1.system, [3.0])
    assert not is_time_invariant(example3.system, [3.0])
    assert is_time_invariant(example3.system, [0.0])


def test_backends_agree(example3, backend):
    from ensemblectl import kernels
    sys = example3.system
    grid = TimeGrid(300, 1.0)
    tab = transition_table(sys, grid, [2.5], method="rk4")
    kernels.set_backend("numpy")
    ref = transition_table(sys, grid, [2.5], method="rk4")
    np.testing.assert_allclose(tab.Phi0t, ref.Phi0t, rtol=1e-13, atol=1e-15)
