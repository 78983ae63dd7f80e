import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde.errors import ValidationError
from fracspde.fbm import TimeGrid, fgn_autocovariance
from fracspde.mkernel import (
    cell_integrals,
    kernel_constants,
    kernel_eval,
    kernel_moments,
    transform_matrix,
    transform_path,
    transform_series,
    transform_weights,
    weights_csv_rows,
)

mp.mp.dps = 30


def _mp_constants(H):
    H = mp.mpf(H)
    c = mp.sqrt(mp.gamma(3 - 2 * H) / (2 * H * mp.gamma(mp.mpf(3) / 2 - H) ** 3 * mp.gamma(mp.mpf(1) / 2 + H)))
    b1 = c * mp.beta(mp.mpf(3) / 2 - H, mp.mpf(3) / 2 - H)
    b2 = c * mp.beta(mp.mpf(1) / 2 + H, mp.mpf(3) / 2 - H)
    return float(c), float(b1), float(b2)


@pytest.mark.parametrize("H", [0.01, 0.1, 0.25, 0.5, 0.7, 0.9, 0.99])
def test_constants_high_precision(H):
    kc = kernel_constants(H)
    c, b1, b2 = _mp_constants(H)
    np.testing.assert_allclose([kc.c_h, kc.b1, kc.b2], [c, b1, b2], rtol=1e-13)
    assert all(np.isfinite(x) and x > 0 for x in (kc.c_h, kc.b1, kc.b2))


def test_constants_at_one_half():
    kc = kernel_constants(0.5)
    assert (kc.c_h, kc.b1, kc.b2) == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)


def test_beta_by_quadrature():
    H = 0.7
    a = 1.5 - H
    quad = mp.quad(lambda x: x ** (a - 1) * (1 - x) ** (a - 1), [0, 0.5, 1])
    assert kernel_constants(H).b1 / kernel_constants(H).c_h == pytest.approx(float(quad), rel=1e-10)


def test_kernel_values():
    assert kernel_eval(1.0, 0.5, 0.7) == pytest.approx(kernel_constants(0.7).c_h * 0.5**-0.2 * 0.5**-0.2, rel=1e-14)
    s = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(kernel_eval(1.0, s, 0.5), 1.0, rtol=1e-14)
    assert kernel_eval(1.0, 1e-30, 0.3) < 1e-5
    assert kernel_eval(1.0, 1e-12, 0.7) > 1e2
    assert kernel_eval(1.0, 1.5, 0.3) == 0.0


@pytest.mark.parametrize("H", [0.1, 0.3, 0.7, 0.9])
def test_cell_moments_against_incomplete_beta(H):
    t = 1.7
    edges = np.linspace(0.0, t, 9)
    m0, g = kernel_moments(t, edges[:-1], edges[1:], H)
    c = mp.mpf(kernel_constants(H).c_h)
    p = mp.mpf(0.5) - mp.mpf(H)
    tt = mp.mpf(t)
    for i in range(8):
        x1, x2 = mp.mpf(edges[i]) / tt, mp.mpf(edges[i + 1]) / tt
        ref0 = c * tt ** (2 * p + 1) * mp.betainc(p + 1, p + 1, x1, x2)
        ref1 = 2 * mp.mpf(H) * c * tt * mp.betainc(mp.mpf(H) + mp.mpf(0.5), p + 1, x1, x2)
        assert m0[i] == pytest.approx(float(ref0), rel=1e-11)
        assert g[i] == pytest.approx(float(ref1), rel=1e-11)


def test_single_cell_uses_beta_closed_form():
    out = cell_integrals(2.0, [0.0], [2.0], -0.2, -0.2)
    assert out[0] == pytest.approx(float(2 ** 0.6 * mp.beta(0.8, 0.8)), rel=1e-13)


def test_weights_at_one_half_are_one():
    grid = TimeGrid(3.0, 40)
    for j in (1, 2, 17, 40):
        np.testing.assert_allclose(transform_weights(grid, j, 0.5), 1.0, rtol=1e-13)


@given(st.floats(0.05, 0.95), st.floats(0.2, 5.0), st.integers(2, 300))
@settings(max_examples=40, deadline=None)
def test_drift_terms_integrated_exactly(H, T, n):
    grid = TimeGrid(T, n)
    kc = kernel_constants(H)
    s = grid.points
    lin = transform_path(s, grid, n, H)
    pw = transform_path(s ** (2 * H), grid, n, H)
    assert lin == pytest.approx(kc.b1 * T ** (2 - 2 * H), rel=1e-8)
    assert pw == pytest.approx(2 * H * kc.b2 * T, rel=1e-8)


def test_transform_of_zero_and_linearity(rng):
    grid = TimeGrid(1.0, 64)
    assert transform_path(np.zeros(65), grid, 64, 0.3) == 0.0
    a, b = rng.standard_normal((2, 65))
    for j in (5, 64):
        lhs = transform_path(2.0 * a - 3.0 * b, grid, j, 0.3)
        rhs = 2.0 * transform_path(a, grid, j, 0.3) - 3.0 * transform_path(b, grid, j, 0.3)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    # only increments matter
    assert transform_path(a + 5.0, grid, 64, 0.3) == pytest.approx(transform_path(a, grid, 64, 0.3), rel=1e-12)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_smooth_path_convergence(H):
    # reference: int_0^1 l_H(1, s) cos(s) ds at high precision
    c = mp.mpf(kernel_constants(H).c_h)
    p = mp.mpf(0.5) - mp.mpf(H)
    ref = float(mp.quad(lambda s: c * s**p * (1 - s) ** p * mp.cos(s), [0, 0.5, 1]))
    errs = []
    for n in (32, 64, 128, 256):
        grid = TimeGrid(1.0, n)
        errs.append(abs(transform_path(np.sin(grid.points), grid, n, H) - ref))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[-1] < 1e-5 * abs(ref)
    assert np.all(rates > 1.8)


def test_kernel_average_rule_is_coarser():
    H = 0.3
    kc = kernel_constants(H)
    errs = []
    for n in (64, 256, 1024):
        grid = TimeGrid(1.0, n)
        v = transform_path(grid.points ** (2 * H), grid, n, H, rule="kernel_average")
        errs.append(abs(v / (2 * H * kc.b2) - 1))
    assert errs[0] > errs[1] > errs[2] > 1e-7


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_noise_variance_of_transform(H):
    # Var(int l dW^H) = t^(2-2H); the quadratic form w' Sigma w is the exact discrete variance
    prev = np.inf
    for n in (64, 256):
        grid = TimeGrid(1.0, n)
        w = transform_weights(grid, n, H)
        gamma = fgn_autocovariance(np.arange(n), H) * grid.dt ** (2 * H)
        idx = np.arange(n)
        var = w @ gamma[np.abs(idx[:, None] - idx[None, :])] @ w
        err = abs(var - 1.0)
        assert err < prev
        prev = err
    assert prev < 2e-3


def test_series_matches_pointwise(rng):
    grid = TimeGrid(2.0, 30)
    v = np.concatenate([[0.0], np.cumsum(rng.standard_normal(30))])
    series = transform_series(v, grid, 0.4)
    assert series.values[0] == 0.0
    for j in (1, 2, 15, 30):
        assert series.values[j] == pytest.approx(transform_path(v, grid, j, 0.4), rel=1e-12)
    M = transform_matrix(grid, 0.4)
    assert np.all(np.triu(M, 1) == 0)


def test_batch_transform(rng):
    grid = TimeGrid(1.0, 16)
    V = rng.standard_normal((3, 5, 17))
    out = transform_path(V, grid, 16, 0.6)
    assert out.shape == (3, 5)
    assert out[1, 2] == pytest.approx(transform_path(V[1, 2], grid, 16, 0.6), rel=1e-13)


def test_weights_csv_rows():
    grid = TimeGrid(1.0, 4)
    rows = weights_csv_rows(grid, 4, 0.3)
    assert [i for i, _ in rows] == [1, 2, 3, 4]
    np.testing.assert_allclose([w for _, w in rows], transform_weights(grid, 4, 0.3))


@pytest.mark.parametrize(
    "call",
    [
        lambda g: transform_weights(g, 4, 1.2),
        lambda g: transform_weights(g, 4, 0.3, rule="simpson"),
        lambda g: transform_weights(g, 0, 0.3),
        lambda g: transform_path(np.zeros(4), g, 2, 0.3),
        lambda g: kernel_constants(0.0),
    ],
)
def test_invalid_inputs(call):
    with pytest.raises(ValidationError):
        call(TimeGrid(1.0, 8))
