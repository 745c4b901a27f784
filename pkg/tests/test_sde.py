import numpy as np
import pytest
from scipy import stats as sps
from scipy.integrate import quad

from ensemblectl import kernels
from ensemblectl.errors import InvalidStep, NonFiniteState, SimulationError
from ensemblectl.model import EnsembleSystem, TimeGrid
from ensemblectl.sde import (SimulationConfig, poisson_arrivals, simulate_brownian_em,
                             simulate_brownian_sri15, simulate_deterministic,
                             simulate_poisson, simulate_trials, trial_generator)
from ensemblectl.synthesis import ControlSignal


def scalar(A="-2", B="1", G="0.3", noise="brownian", intensities=(), T=1.0, X0="1"):
    return EnsembleSystem.build(A=[[A]], B=[[B]], G=[[G]], K_bounds=[(0, 1)], T=T,
                                X0=[X0], XF=["0"], noise=noise, intensities=intensities)


def slope(h, err):
    return np.polyfit(np.log(h), np.log(err), 1)[0]


# Euler-Maruyama --------------------------------------------------------------

def test_em_weak_order_on_ou():
    sys = scalar()
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    exact_mean = np.exp(-2.0)
    errs = []
    for i, h in enumerate(hs):
        cfg = SimulationConfig(h=float(h), scheme="em", seed=11, trials=40000)
        X = simulate_trials(sys, None, [0.5], cfg, stream=i).terminals[:, 0]
        errs.append(abs(X.mean() - exact_mean))
    assert slope(hs, errs) >= 0.8, errs


def _ou_triples(rng, a, h, shape):
    """Exact joint samples of (dW, dZ, J) over one step of length h.

    dW = int dW_s, dZ = int (h - s) dW_s, J = int exp(a (h - s)) dW_s.
    """
    f = [lambda u: 1.0, lambda u: u, lambda u: np.exp(a * u)]
    cov = np.array([[quad(lambda u: fi(u) * fj(u), 0, h, epsabs=1e-15)[0] for fj in f]
                    for fi in f])
    L = np.linalg.cholesky(cov)
    z = rng.standard_normal(shape + (3,))
    return z @ L.T


def _strong_errors(scheme, hs, a=-1.0, sigma=1.0, T=1.0, paths=2000, seed=5):
    errs = []
    for i, h in enumerate(hs):
        S = int(round(T / h))
        rng = np.random.default_rng(seed + i)
        w = _ou_triples(rng, a, h, (paths, S))
        dW, dZ, J = (np.ascontiguousarray(w[..., c:c + 1]) for c in range(3))
        exact = np.ones(paths)
        for s in range(S):
            exact = np.exp(a * h) * exact + sigma * J[:, s, 0]
        A = np.full((S + 1, 1, 1), a)
        G = np.full((S + 1, 1, 1), sigma)
        f = np.zeros((S, 1))
        x0 = np.ones(1)
        if scheme == "sri15":
            X, ok = kernels.sri15(x0, A, f, f, G, h, dW, dZ)
        else:
            X, ok = kernels.em(x0, A[:-1], f, G[:-1], h, dW)
        assert ok.all()
        errs.append(np.sqrt(np.mean((X[:, 0, 0] - exact) ** 2)))
    return np.array(errs)


def test_sri15_strong_order_on_ou(backend):
    hs = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    errs = _strong_errors("sri15", hs)
    assert slope(hs, errs) >= 1.4, errs


def test_em_strong_order_on_additive_ou():
    # additive noise: EM is strongly of order one
    hs = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    errs = _strong_errors("em", hs)
    assert 0.8 <= slope(hs, errs) <= 1.3, errs


def test_sri15_increment_moments():
    """The scheme's (dW, dZ) pairs have variance h, h^3/3 and covariance h^2/2."""
    sys = scalar(A="0", G="1")
    h = 0.01
    from ensemblectl.sde import step_count
    S = step_count(1.0, h)
    xi = np.stack([trial_generator(3, r).standard_normal((S, 2, 1)) for r in range(400)])
    dW = xi[:, :, 0, 0] * np.sqrt(h)
    dZ = 0.5 * h ** 1.5 * (xi[:, :, 0, 0] + xi[:, :, 1, 0] / np.sqrt(3))
    assert np.var(dW) == pytest.approx(h, rel=0.02)
    assert np.var(dZ) == pytest.approx(h ** 3 / 3, rel=0.02)
    assert np.mean(dW * dZ) == pytest.approx(h ** 2 / 2, rel=0.02)
    # with A = 0 the state is X0 + W(T): the terminal equals the summed increments
    sample = simulate_brownian_sri15(sys, None, [0.5], h, seed=3, trial=0)
    assert sample.terminal[0] == pytest.approx(1 + dW[0].sum(), abs=1e-12)


# Poisson -----------------------------------------------------------------------

def test_poisson_counts_chi_square():
    lam, T, trials = 20.0, 1.0, 10000
    counts = np.array([poisson_arrivals(trial_generator(99, r), [lam], T)[0].size
                       for r in range(trials)])
    edges = np.concatenate([[0], np.arange(11, 31), [np.inf]])  # pool the tails
    observed = np.histogram(counts, bins=edges)[0]
    cdf = sps.poisson.cdf(edges[1:] - 1, lam * T)
    expected = trials * np.diff(np.concatenate([[0.0], cdf]))
    expected[-1] = trials - expected[:-1].sum()
    assert expected.min() >= 5
    p = sps.chisquare(observed, expected).pvalue
    assert p > 0.001, p


def test_poisson_arrival_times_are_uniform():
    times = np.concatenate([poisson_arrivals(trial_generator(4, r), [5.0], 2.0)[0]
                            for r in range(2000)])
    assert np.all((times > 0) & (times <= 2.0))
    assert sps.kstest(times / 2.0, "uniform").pvalue > 0.001


def test_poisson_jumps_shift_the_state_by_g():
    sys = scalar(A="0", G="0.25", noise="poisson", intensities=[7.0])
    sample = simulate_poisson(sys, None, [0.5], seed=1, h=0.01)
    assert sample.terminal[0] == pytest.approx(1 + 0.25 * sample.jump_times.size, abs=1e-12)
    batch = simulate_trials(sys, None, [0.5], SimulationConfig(0.01, "poisson", 1, 3))
    assert batch.jump_counts[0] == sample.jump_times.size
    assert batch.terminals[0, 0] == pytest.approx(sample.terminal[0], abs=1e-12)


def test_poisson_without_jumps_matches_deterministic():
    sys = scalar(A="-sin(b*t)", G="0.5", noise="poisson", intensities=[0.0])
    grid = TimeGrid(50, 1.0)
    u = ControlSignal(grid, np.sin(np.arange(50))[:, None])
    det = simulate_deterministic(sys, u, [3.0], 0.01)
    poi = simulate_poisson(sys, u, [3.0], seed=0, h=0.01)
    np.testing.assert_array_equal(det.states, poi.states)


# deterministic RK4 ---------------------------------------------------------------

def test_rk4_deterministic_order():
    sys = scalar(A="-sin(b*t)", G="0")
    b = 3.0
    exact = np.exp((np.cos(b) - 1) / b)
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = [abs(simulate_deterministic(sys, None, [b], h).terminal[0] - exact) for h in hs]
    assert 3.5 <= slope(hs, errs) <= 4.5


def test_rk4_respects_control_breakpoints():
    # control steps at 1/3 intervals, off the h grid: the integral stays exact
    sys = scalar(A="0", G="0", X0="0")
    u = ControlSignal(TimeGrid(3, 1.0), np.array([[1.0], [-2.0], [4.0]]))
    x = simulate_deterministic(sys, u, [0.0], 0.25).terminal[0]
    assert x == pytest.approx(1.0, abs=1e-14)


# determinism and streams ----------------------------------------------------------

def test_trials_are_reproducible_and_batch_invariant():
    sys = scalar()
    cfg = SimulationConfig(h=0.01, scheme="em", seed=5, trials=20)
    a = simulate_trials(sys, None, [0.5], cfg, stream=2).terminals
    b = simulate_trials(sys, None, [0.5], cfg, stream=2).terminals
    np.testing.assert_array_equal(a, b)
    part = simulate_trials(sys, None, [0.5], SimulationConfig(0.01, "em", 5, 5), stream=2,
                           first_trial=10).terminals
    np.testing.assert_array_equal(part, a[10:15])
    single = simulate_brownian_em(sys, None, [0.5], 0.01, seed=5, trial=13, stream=2)
    assert single.terminal[0] == a[13, 0]
    other = simulate_trials(sys, None, [0.5], cfg, stream=3).terminals
    assert not np.array_equal(a, other)


def test_trial_streams_are_uncorrelated():
    first = np.array([trial_generator(8, r, 0).standard_normal(2) for r in range(4000)])
    lag = np.corrcoef(first[:-1, 0], first[1:, 0])[0, 1]
    cross = np.corrcoef(first[:, 0], first[:, 1])[0, 1]
    bound = 4 / np.sqrt(4000)
    assert abs(lag) < bound and abs(cross) < bound
    other = np.array([trial_generator(8, r, 1).standard_normal() for r in range(4000)])
    assert abs(np.corrcoef(first[:, 0], other)[0, 1]) < bound


@pytest.mark.parametrize("scheme", ["em", "sri15", "poisson", "rk4"])
def test_backends_agree(scheme, backend):
    noise = "poisson" if scheme == "poisson" else "brownian"
    sys = scalar(A="-sin(b*t)", G="0.4", noise=noise, intensities=[3.0] if noise == "poisson" else ())
    u = ControlSignal(TimeGrid(40, 1.0), np.cos(np.arange(40.0))[:, None])
    cfg = SimulationConfig(h=0.02, scheme=scheme, seed=2, trials=8)
    X = simulate_trials(sys, u, [2.0], cfg).terminals
    kernels.set_backend("numpy")
    ref = simulate_trials(sys, u, [2.0], cfg).terminals
    np.testing.assert_allclose(X, ref, rtol=1e-12, atol=1e-14)


# errors ----------------------------------------------------------------------------

def test_step_must_divide_horizon():
    with pytest.raises(InvalidStep):
        simulate_deterministic(scalar(), None, [0.5], 0.3)
    with pytest.raises(InvalidStep):
        SimulationConfig(h=0.0)


def test_blow_up_is_reported():
    with pytest.raises(NonFiniteState):
        simulate_deterministic(scalar(A="60"), None, [0.5], 0.01)


def test_scheme_noise_mismatch():
    with pytest.raises(SimulationError):
        simulate_trials(scalar(), None, [0.5], SimulationConfig(0.1, "poisson", 0, 2))
    with pytest.raises(SimulationError):
        SimulationConfig(0.1, "milstein")
