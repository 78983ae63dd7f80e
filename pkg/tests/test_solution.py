import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde.errors import ValidationError
from fracspde.fbm import FbmPath, TimeGrid, sample_fbm, sample_fbm_batch
from fracspde.solution import log_paths, mode_exponent, modes_from_values, simulate_modes
from fracspde.specmodel import SpectralModel, builtin_model


def test_invariants(lap):
    grid = TimeGrid(1.0, 64)
    m = lap.replace(u0=[1.0, -2.0, 0.5, 3.0, -1.0, 1.0])
    paths = simulate_modes(m, grid, sample_fbm(grid, m.hurst, 4))
    np.testing.assert_array_equal(paths.u[:, 0], m.u0)
    assert np.all(np.sign(paths.u) == np.sign(m.u0)[:, None])
    assert paths.u.shape == (6, 65)


def test_noise_free_mode_is_exponential():
    grid = TimeGrid(2.0, 50)
    m = SpectralModel(lam=[1, 2], rho=[0.3, -1.0], nu=[-1.0, 2.0], mu=[0.0, 0.0], theta=0.7,
                      hurst=0.3, u0=[2.0, -1.0])
    paths = simulate_modes(m, grid, sample_fbm(grid, 0.3, 1))
    expected = m.u0[:, None] * np.exp(m.alpha()[:, None] * grid.points)
    np.testing.assert_allclose(paths.u, expected, rtol=1e-12)


def test_heat_mode_hand_value():
    m = builtin_model("heat_1d", {"K": 1, "theta": 1.0, "H": 0.3})
    t, w = 0.7, 0.25
    v = mode_exponent(m, np.array([t]), np.array([w]))[0, 0]
    assert v == pytest.approx(-t - 0.5 * t**0.6 + w, rel=1e-15)


def test_log_path_hand_value():
    m = builtin_model("heat_1d", {"K": 1, "theta": 2.0, "H": 0.5})
    grid = TimeGrid(1.0, 2)
    driver = FbmPath(grid, 0.5, np.array([0.0, 0.1, 0.3]))
    lp = log_paths(simulate_modes(m, grid, driver))
    assert lp.mode(1)[0] == 0.0
    assert lp.mode(1)[-1] == pytest.approx(-2.2, rel=1e-14)


@given(st.floats(-3, 3), st.floats(0.1, 0.9), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_reconstruction(theta, H, seed):
    m = builtin_model("laplacian_power", {"K": 3, "theta": theta, "H": H, "r": 0.25, "u0": [1.0, 2.0, -0.5]})
    grid = TimeGrid(1.0, 16)
    paths = simulate_modes(m, grid, sample_fbm(grid, H, seed))
    lp = log_paths(paths)
    np.testing.assert_allclose(np.exp(lp.v) * m.u0[:, None], paths.u, rtol=1e-12)
    # reading the values back gives the same log-paths
    lp2 = log_paths(modes_from_values(m, grid, paths.u))
    np.testing.assert_allclose(lp2.v, lp.v, rtol=1e-12, atol=1e-12)


def test_forcing_acts_as_shift():
    grid = TimeGrid(1.0, 8)
    base = SpectralModel(lam=[1], rho=[0.2], nu=[-1], mu=[0.5], theta=1.0, hurst=0.6, u0=[1])
    forced = base.replace(forcing_f=[0.3], forcing_g=[0.25])
    shifted = base.replace(rho=[0.5], mu=[0.75])
    w = sample_fbm(grid, 0.6, 2)
    np.testing.assert_allclose(simulate_modes(forced, grid, w).u, simulate_modes(shifted, grid, w).u, rtol=1e-14)


def test_wick_mean(lap):
    # E u_k(t) = u_k(0) exp(alpha_k t) for the Wick exponential
    grid = TimeGrid(1.0, 8)
    m = lap.replace(hurst=0.7)
    W = sample_fbm_batch(grid, 0.7, 21, range(20_000))
    u = np.exp(mode_exponent(m, grid.points[-1:], W[:, -1:], [0]))[:, 0, 0]
    target = np.exp(m.alpha()[0])
    assert abs(u.mean() - target) < 4 * u.std() / np.sqrt(u.size)


def test_euler_maruyama_oracle():
    # H = 1/2: the exponential formula is the Ito solution of du = a u dt + mu u dW
    rng = np.random.default_rng(0)
    n_paths, n_sub, T = 1000, 100_000, 1.0
    a, mu = -0.8, 0.6
    m = SpectralModel(lam=[1], rho=[a], nu=[0.0], mu=[mu], theta=0.0, hurst=0.5, u0=[1.0])
    dt = T / n_sub
    u = np.ones(n_paths)
    W = np.zeros(n_paths)
    for _ in range(n_sub):
        dW = rng.standard_normal(n_paths) * np.sqrt(dt)
        u += a * u * dt + mu * u * dW
        W += dW
    exact = np.exp(mode_exponent(m, np.array([T]), W[:, None], [0]))[:, 0, 0]
    rel = np.abs(u - exact) / exact
    # strong order 1/2: pathwise error of a few times mu^2 sqrt(dt)
    assert np.mean(rel) < 5 * mu**2 * np.sqrt(dt)
    assert np.max(rel) < 1e-2


def test_driver_mismatch(heat):
    grid = TimeGrid(1.0, 8)
    with pytest.raises(ValidationError):
        simulate_modes(heat, grid, sample_fbm(TimeGrid(1.0, 4), 0.5, 0))
    with pytest.raises(ValidationError):
        simulate_modes(heat, grid, sample_fbm(grid, 0.6, 0))


def test_unobservable_mode(heat):
    grid = TimeGrid(1.0, 4)
    m = heat.replace(u0=[1.0, 0.0, 1.0, 1.0])
    lp = log_paths(simulate_modes(m, grid, sample_fbm(grid, 0.5, 0)))
    assert np.all(np.isnan(lp.v[1]))
    with pytest.raises(ValidationError):
        lp.mode(2)


def test_sign_change_rejected(heat):
    grid = TimeGrid(1.0, 2)
    u = np.ones((4, 3))
    u[0, 2] = -1.0
    with pytest.raises(ValidationError):
        log_paths(modes_from_values(heat, grid, u))
    with pytest.raises(ValidationError):
        modes_from_values(heat, grid, np.ones((3, 3)))
