import numpy as np
import pytest

from ensemblectl import builtin_example
from ensemblectl.errors import InsufficientTrials
from ensemblectl.model import EnsembleSystem, uniform_parameter_grid
from ensemblectl.pipeline import run_synthesis, simulate_ensemble
from ensemblectl.sde import SimulationConfig
from ensemblectl.stats import (free_mean, monte_carlo_stats, mse_sweep, theoretical_mse,
                               theoretical_mse_many)

# independent references (scipy quad on the closed-form integrands), frozen
C_SCALAR = {(2.0, 2.0): 1.5764161048745091, (1.0, 1.0): 0.5700478004958885,
            (3.0, 2.0): 10.251798772405907, (2.0, -3.5): 1.489019260261813}
C_QUANTUM = {0.8: 0.010277686104126748, 0.9: 0.011237818282353373, 1.0: 0.012435216888711628}
FREE_MEAN_POISSON_W3 = (-1.6062833261139715, 0.851490842946638)


def test_oscillator_theory_is_tgg(example1):
    values = theoretical_mse_many(example1.system, 1.0, example1.param_grid.points)
    assert np.max(np.abs(values - 0.05)) <= 1e-6
    assert np.ptp(values) <= 1e-10


def test_poisson_theory_is_t_lambda_gg():
    ex = builtin_example("poisson-oscillator")
    values = theoretical_mse_many(ex.system, 1.0, ex.param_grid.points)
    assert np.max(np.abs(values - 0.1)) <= 1e-6


def test_zero_noise_gives_zero(example3):
    sys = example3.system
    quiet = EnsembleSystem.build(A=[["-sin(b*t)"]], B=[["1"]], G=[["0"]], K_bounds=[(-5, 5)],
                                 T=1.0, X0=["1"], XF=["0.2"])
    assert theoretical_mse(quiet, 2.0, 2.0) == 0.0
    none = EnsembleSystem.build(A=[["-sin(b*t)"]], B=[["1"]], G=[["1"]], K_bounds=[(-5, 5)],
                                T=1.0, X0=["1"], XF=["0.2"], noise="none")
    assert theoretical_mse(none, 2.0, 2.0) == 0.0
    assert theoretical_mse(sys, 2.0, 2.0) > 0


def _midpoint_oracle(T, b, M=1_000_000):
    tau = (np.arange(M) + 0.5) * (T / M)
    return float(np.sum(np.exp((2.0 / b) * (np.cos(b * T) - np.cos(b * tau)))) * (T / M))


@pytest.mark.parametrize("T, b", list(C_SCALAR))
def test_scalar_example_against_references(example3, T, b):
    value = theoretical_mse(example3.system, T, b)
    assert value == pytest.approx(C_SCALAR[(T, b)], rel=1e-6)
    assert value == pytest.approx(_midpoint_oracle(T, b), rel=1e-6)


def test_quantum_transport_against_reference():
    sys = builtin_example("quantum-transport").system
    values = theoretical_mse_many(sys, 10.0, [[w] for w in C_QUANTUM])
    np.testing.assert_allclose(values, list(C_QUANTUM.values()), rtol=1e-6)


@pytest.mark.parametrize("name, T", [("bm-oscillator", 1.0), ("poisson-oscillator", 1.0),
                                     ("scalar-tv", 2.0), ("quantum-transport", 10.0)])
def test_quadrature_converged(name, T):
    ex = builtin_example(name)
    pts = ex.param_grid.points[::max(1, ex.param_grid.P // 5)]
    a = theoretical_mse_many(ex.system, T, pts, quad_steps=8000)
    b = theoretical_mse_many(ex.system, T, pts, quad_steps=16000)
    assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-6


def test_theory_nondecreasing_in_horizon(example3):
    values = [theoretical_mse(example3.system, T, 2.0) for T in np.linspace(1, 3, 21)]
    assert np.all(np.diff(values) >= 0)


def test_quad_steps_lower_bound(example3):
    with pytest.raises(ValueError):
        theoretical_mse(example3.system, 1.0, 1.0, quad_steps=8)


def test_free_mean_includes_jump_drift():
    sys = builtin_example("poisson-oscillator").system
    np.testing.assert_allclose(free_mean(sys, 1.0, 3.0), FREE_MEAN_POISSON_W3, atol=1e-8)
    np.testing.assert_allclose(free_mean(sys, 1.0, 0.0), [2.0, 1.0], atol=1e-12)


# Monte Carlo estimators -----------------------------------------------------------

def test_exact_terminals_give_zero_objectives():
    grid = uniform_parameter_grid([(0, 1)], 3)
    X = np.zeros((3, 5, 2)) + np.array([0.5, -1.0])
    st = monte_carlo_stats(X, lambda b: [0.5, -1.0], grid)
    assert st.J1 == 0.0 and st.J2_empirical == 0.0
    assert np.all(st.mse_se == 0)


def test_hand_arithmetic():
    grid = uniform_parameter_grid([(0, 1)], 1)
    X = np.array([[[1.0, 0.0], [-1.0, 0.0]]])
    st = monte_carlo_stats(X, lambda b: [0.0, 0.0], grid)
    np.testing.assert_array_equal(st.mean_terminal, [[0.0, 0.0]])
    assert st.mse_empirical[0] == 1.0
    assert st.mse_se[0] == 0.0
    assert st.J1 == 0.0 and st.J2_empirical == 1.0


def test_needs_two_trials():
    grid = uniform_parameter_grid([(0, 1)], 2)
    with pytest.raises(InsufficientTrials):
        monte_carlo_stats(np.zeros((2, 1, 1)), lambda b: [0.0], grid)


def test_fubini_and_variance_decomposition(rng):
    grid = uniform_parameter_grid([(-2, 2)], 7)
    X = rng.normal(loc=0.3, scale=0.5, size=(7, 50, 3))
    target = lambda b: [0.1 * b[0], 0.0, -0.2]
    st = monte_carlo_stats(X, target, grid, mse_theory=np.full(7, 0.75))
    XF = np.stack([target(b) for b in grid.points])
    pooled = np.sum(grid.weights[:, None] * np.sum((X - XF[:, None]) ** 2, axis=2)) / 50
    assert st.J2_empirical == pytest.approx(pooled, rel=1e-12)
    assert st.J2_empirical >= st.J1 ** 2 - 3 * st.J2_se
    assert st.J2_theory == pytest.approx(0.75 * 4.0)


def test_csv_outputs(tmp_path):
    grid = uniform_parameter_grid([(0, 1)], 2)
    X = np.arange(12, dtype=float).reshape(2, 3, 2)
    st = monte_carlo_stats(X, lambda b: [0.0, 0.0], grid, mse_theory=[0.1, 0.2])
    st.to_csv(tmp_path / "stats.csv")
    st.summary_csv(tmp_path / "summary.csv")
    lines = (tmp_path / "stats.csv").read_text().splitlines()
    assert lines[0] == "beta,meanx1,meanx2,mse,mse_se,mse_theory"
    assert lines[1].startswith("0.0,2.0,3.0,")
    assert (tmp_path / "summary.csv").read_text().splitlines()[0] == "J1,J2_emp,J2_theory"


def test_sweep_of_noise_free_system_has_zero_theory():
    quiet = EnsembleSystem.build(A=[["-sin(b*t)"]], B=[["1"]], G=[["0"]], K_bounds=[(-5, 5)],
                                 T=1.0, X0=["1"], XF=["0.2"])
    table = mse_sweep(quiet, None, "beta", [-1.0, 0.0, 1.0], 1.0, trials=3, scheme="em", h=0.01)
    np.testing.assert_array_equal(table.mse_theory, 0.0)
    assert np.all(table.mse_se <= 1e-14)


def test_oscillator_mc_with_selected_rank(example1):
    """Monte Carlo under the condition-selected rank: mean and MSE at a few frequencies."""
    sys, pg = example1.system, example1.param_grid
    run = run_synthesis(sys, example1.time_grid, pg)
    sub = uniform_parameter_grid([(-10, 10)], 5)
    cfg = SimulationConfig(h=5e-4, scheme="sri15", seed=3, trials=400, control=run.control)
    X, _ = simulate_ensemble(sys, run.control, sub.points, cfg)
    st = monte_carlo_stats(X, sys, sub, theoretical_mse_many(sys, 1.0, sub.points))
    assert np.all(np.abs(st.mse_empirical - 0.05) <= 3 * st.mse_se)
    assert np.all(np.abs(st.mean_terminal) <= 3 * st.mean_se)
    assert st.J2_empirical >= st.J1 ** 2 - 3 * st.J2_se
