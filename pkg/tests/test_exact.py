import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde.errors import IdentifiabilityError
from fracspde.exact import exact_coefficients, exact_hurst, exact_joint, exact_theta, pair_feasibility
from fracspde.fbm import FbmPath, TimeGrid, sample_fbm
from fracspde.solution import log_paths, simulate_modes
from fracspde.specmodel import SpectralModel, builtin_model


def _lp(model, T=2.0, n=32, seed=0, driver=None):
    grid = TimeGrid(T, n)
    w = sample_fbm(grid, model.hurst, seed) if driver is None else FbmPath(grid, model.hurst, driver)
    return log_paths(simulate_modes(model, grid, w))


def _lap(theta, H, r, K=4, **kw):
    return builtin_model("laplacian_power", {"K": K, "theta": theta, "H": H, "r": r, **kw})


@given(st.floats(-3, 3), st.floats(0.05, 0.95), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_heat_theta_matches_log_ratio(theta, H, seed):
    m = builtin_model("heat_1d", {"K": 3, "theta": theta, "H": H})
    lp = _lp(m, T=1.3, seed=seed)
    paths = simulate_modes(m, lp.grid, sample_fbm(lp.grid, H, seed))
    u = paths.u
    closed = np.log(u[0, -1] * u[1, 0] / (u[1, -1] * u[0, 0])) / (1.3 * (4 - 1))
    est = exact_theta(lp, 1, 2).value
    assert est == pytest.approx(theta, rel=1e-10, abs=1e-10)
    assert est == pytest.approx(closed, rel=1e-10, abs=1e-10)


def test_example2_theta():
    lp = _lp(_lap(0.8, 0.3, 0.25), seed=3)
    assert exact_theta(lp, 1, 3).value == pytest.approx(0.8, rel=1e-9)


def test_theta_ignores_driver(rng):
    m = _lap(1.1, 0.4, -1.0)
    a = exact_theta(_lp(m, seed=1), 2, 4).value
    junk = np.concatenate([[0.0], np.cumsum(rng.standard_normal(32)) * 5])
    b = exact_theta(_lp(m, driver=junk), 2, 4).value
    assert a == pytest.approx(b, rel=1e-12)


def test_theta_antisymmetric_pair():
    lp = _lp(_lap(0.5, 0.6, 0.25), seed=2)
    assert exact_theta(lp, 1, 3).value == pytest.approx(exact_theta(lp, 3, 1).value, rel=1e-13)
    c12, c21 = exact_coefficients(lp, 1, 3, 32), exact_coefficients(lp, 3, 1, 32)
    assert c12.alpha_km == pytest.approx(-c21.alpha_km)
    assert c12.beta_km == pytest.approx(-c21.beta_km)
    assert c12.delta_km == pytest.approx(-c21.delta_km)


def test_coefficient_identity():
    m = _lap(1.5, 0.35, -1.0)
    lp = _lp(m, seed=9)
    for idx in (5, 32):
        c = exact_coefficients(lp, 1, 2, idx)
        assert c.delta_km == pytest.approx(m.theta * c.alpha_km + c.beta_km * c.t ** (2 * m.hurst), rel=1e-12)


def test_terminal_value_sufficiency():
    m = _lap(0.9, 0.45, -1.0)
    lp = _lp(m, n=32, seed=4)
    v = lp.v.copy()
    v[:, 1:-1] = 123.0
    lp2 = type(lp)(m, lp.grid, v, lp.valid_modes)
    assert exact_theta(lp2, 1, 2).value == exact_theta(lp, 1, 2).value
    assert exact_joint(lp2, (1, 2), (2, 3)).value == exact_joint(lp, (1, 2), (2, 3)).value


def test_hurst_example2():
    lp = _lp(_lap(1.0, 0.6, -1.0), T=2.0, seed=5)
    rep = exact_hurst(lp, 1, 2)
    assert rep.value == pytest.approx(0.6, abs=1e-9)
    assert rep.horizon == 2.0


def test_hurst_heat_unidentifiable():
    lp = _lp(builtin_model("heat_1d", {"K": 3, "theta": 1.0, "H": 0.4}))
    with pytest.raises(IdentifiabilityError):
        exact_hurst(lp, 1, 2)
    with pytest.raises(IdentifiabilityError):
        exact_joint(lp, (1, 2), (2, 3))


def test_hurst_at_unit_time_falls_back():
    lp = _lp(_lap(1.0, 0.3, -1.0), T=1.0, n=32, seed=6)
    rep = exact_hurst(lp, 1, 2)
    assert rep.horizon == 0.5
    assert rep.value == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(IdentifiabilityError, match="t = 1"):
        exact_hurst(lp, 1, 2, t_index=32)


def test_joint_example2():
    lp = _lp(_lap(1.5, 0.35, -1.0), T=2.0, seed=7)
    theta, H = exact_joint(lp, (1, 2), (2, 3)).value
    assert theta == pytest.approx(1.5, abs=1e-8)
    assert H == pytest.approx(0.35, abs=1e-8)


def test_joint_consistent_with_two_step():
    lp = _lp(_lap(0.7, 0.55, 0.25, K=5), T=0.5, seed=8)
    th = exact_theta(lp, 1, 2).value
    H = exact_hurst(lp, 2, 3, theta=th).value
    jt, jH = exact_joint(lp, (1, 2), (2, 3)).value
    assert jt == pytest.approx(th, rel=1e-9)
    assert jH == pytest.approx(H, abs=1e-9)


def test_joint_duplicate_pair_degenerate():
    lp = _lp(_lap(1.0, 0.4, -1.0))
    with pytest.raises(IdentifiabilityError) as err:
        exact_joint(lp, (1, 2), (1, 2))
    assert err.value.suggestions


@given(st.floats(0.1, 100.0))
@settings(max_examples=15, deadline=None)
def test_initial_scale_invariance(c):
    m = _lap(1.2, 0.3, -1.0)
    a = exact_joint(_lp(m, seed=11), (1, 2), (2, 3)).value
    b = exact_joint(_lp(m.replace(u0=c * m.u0), seed=11), (1, 2), (2, 3)).value
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_joint_partial_at_unit_time():
    # theta survives at t = 1 but log t = 0 leaves H undetermined
    m = SpectralModel(lam=[1, 2, 3], rho=[0, 0, 0], nu=[1.0, 2.0, 5.0], mu=[1.0, 2.0, 3.0],
                      theta=0.4, hurst=0.3, u0=[1, 1, 1])
    lp = _lp(m, T=1.0, n=16, seed=1)
    rep = exact_joint(lp, (1, 2), (1, 3), t_index=16)
    assert rep.status == "partial"
    assert rep.value[0] == pytest.approx(0.4, rel=1e-9)
    assert np.isnan(rep.value[1])


def test_degenerate_theta_pair():
    m = SpectralModel(lam=[1, 2], rho=[0, 1], nu=[1.0, 2.0], mu=[1.0, 2.0], theta=1, hurst=0.5, u0=[1, 1])
    with pytest.raises(IdentifiabilityError, match="degenerate"):
        exact_theta(_lp(m), 1, 2)


def test_feasibility():
    heat = builtin_model("heat_1d", {"K": 4, "theta": 1.0, "H": 0.5})
    f = pair_feasibility(heat)
    assert len(f.theta_pairs) == 6 and f.hurst_pairs == () and f.joint_pairs == ()
    lap = _lap(1.0, 0.5, 0.25)
    f = pair_feasibility(lap)
    assert len(f.hurst_pairs) == 6
    single = builtin_model("heat_1d", {"K": 1, "theta": 1.0, "H": 0.5})
    f = pair_feasibility(single)
    assert f.theta_pairs == f.hurst_pairs == f.joint_pairs == ()
