"""Fundamental-martingale kernel and the pathwise transform.

For a Hurst index ``H`` the kernel is::

    l_H(t, s) = C_H s^(1/2 - H) (t - s)^(1/2 - H),      0 < s < t

and the transform of an observed log-path ``v`` is
``v~(t) = int_0^t l_H(t, s) dv(s)``.  On a grid the transform is a linear
functional of the increments of ``v``::

    v~(t_j) = sum_i w_i (v(t_i) - v(t_{i-1}))

Two rules for ``w`` are provided.

``kernel_average``
    ``w_i`` is the average of the kernel over cell i, i.e. ``v`` is taken
    piecewise linear.  First-order accurate for drifts that behave like
    ``s^(2H)`` near the origin.
``drift_exact`` (default)
    Product integration against the three-point interpolant of ``v`` in the
    Chebyshev system ``{1, s, s^(2H)}``.  It integrates every log-path drift
    ``a s + b s^(2H)`` exactly and reduces to ``kernel_average`` at H = 1/2.

Cell moments of the kernel are computed by Gauss-Jacobi quadrature whose
weight function absorbs the algebraic endpoint singularities, with
node doubling until two consecutive rules agree to ``QUAD_RTOL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betaln, gammaln, roots_jacobi

from .errors import NumericalError, ValidationError
from .fbm import TimeGrid

QUAD_RTOL = 1e-10
_BASE_NODES = 16
_MAX_NODES = 256
RULES = ("drift_exact", "kernel_average")
# Below this |2H - 1| the extra basis function is numerically indistinguishable
# from s and the drift-exact rule falls back to kernel averaging.
_HALF_TOL = 1e-6


def _check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ValidationError(f"Hurst parameter must lie in (0, 1), got {H}")
    return H


@dataclass(frozen=True)
class KernelConstants:
    hurst: float
    c_h: float
    b1: float
    b2: float


@lru_cache(maxsize=256)
def kernel_constants(H: float) -> KernelConstants:
    """``C_H``, ``b1 = C_H B(3/2-H, 3/2-H)``, ``b2 = C_H B(1/2+H, 3/2-H)``."""
    H = _check_hurst(H)
    log_c = 0.5 * (
        gammaln(3.0 - 2.0 * H)
        - np.log(2.0 * H)
        - 3.0 * gammaln(1.5 - H)
        - gammaln(0.5 + H)
    )
    b1 = np.exp(log_c + betaln(1.5 - H, 1.5 - H))
    b2 = np.exp(log_c + betaln(0.5 + H, 1.5 - H))
    return KernelConstants(hurst=H, c_h=float(np.exp(log_c)), b1=float(b1), b2=float(b2))


def kernel_eval(t, s, H: float):
    """Kernel value; zero outside ``0 < s < t``."""
    c = kernel_constants(H).c_h
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < t)
    p = 0.5 - H
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(inside, c * np.abs(s) ** p * np.abs(t - s) ** p, 0.0)
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# Cell moments
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _jacobi(q: int, a: float, b: float):
    """Gauss-Jacobi nodes/weights for weight (1-x)^a (1+x)^b on [-1, 1]."""
    x, w = roots_jacobi(q, a, b)
    return x, w


def _cell_integrals(t: float, a: np.ndarray, b: np.ndarray, e_left: float, e_right: float, q: int):
    """``int_a^b s^e_left (t-s)^e_right ds`` for each cell, q-node rule.

    The cell at the origin uses the Jacobi weight ``s^e_left``, the cell
    ending at ``t`` uses ``(t-s)^e_right``; interior cells are smooth and use
    Gauss-Legendre.
    """
    out = np.empty(a.shape)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    first = a == 0.0
    last = b >= t
    inner = ~(first | last)

    if np.any(inner):
        x, w = _jacobi(q, 0.0, 0.0)
        s = mid[inner, None] + half[inner, None] * x
        out[inner] = half[inner] * ((s**e_left * (t - s) ** e_right) @ w)
    only = first & last
    if np.any(only):
        out[only] = np.exp((e_left + e_right + 1.0) * np.log(t) + betaln(e_left + 1.0, e_right + 1.0))
    sel = first & ~last
    if np.any(sel):
        x, w = _jacobi(q, 0.0, e_left)
        s = mid[sel, None] + half[sel, None] * x
        out[sel] = half[sel] ** (e_left + 1.0) * (((t - s) ** e_right) @ w)
    sel = last & ~first
    if np.any(sel):
        x, w = _jacobi(q, e_right, 0.0)
        s = mid[sel, None] + half[sel, None] * x
        out[sel] = half[sel] ** (e_right + 1.0) * ((s**e_left) @ w)
    return out


def cell_integrals(t: float, a, b, e_left: float, e_right: float, rtol: float = QUAD_RTOL):
    """Adaptive version of ``_cell_integrals``: doubles nodes until converged."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = _BASE_NODES
    prev = _cell_integrals(t, a, b, e_left, e_right, q)
    while True:
        q *= 2
        cur = _cell_integrals(t, a, b, e_left, e_right, q)
        err = np.abs(cur - prev)
        bad = err > rtol * np.abs(cur)
        if not np.any(bad):
            return cur
        if q >= _MAX_NODES:
            i = int(np.flatnonzero(bad)[0])
            raise NumericalError(
                f"kernel quadrature did not converge on [{a[i]:.6g}, {b[i]:.6g}] "
                f"(t={t:.6g}, relative change {err[i] / abs(cur[i]):.2e})"
            )
        prev = cur


def kernel_moments(t: float, a, b, H: float):
    """Cell integrals of ``l_H(t, .)`` and of ``l_H(t, .) * d(s^2H)/ds``."""
    kc = kernel_constants(H)
    p = 0.5 - H
    m0 = kc.c_h * cell_integrals(t, a, b, p, p)
    g = 2.0 * H * kc.c_h * cell_integrals(t, a, b, H - 0.5, p)
    return m0, g


def _power_steps(j: int, q: float) -> np.ndarray:
    """``i^q - (i-1)^q`` for i = 1..j, computed without cancellation."""
    i = np.arange(1, j + 1, dtype=float)
    out = np.ones(j)
    if j > 1:
        prev = i[1:] - 1.0
        out[1:] = prev**q * np.expm1(q * np.log1p(1.0 / prev))
    return out


# ---------------------------------------------------------------------------
# Weights and transforms
# ---------------------------------------------------------------------------


@lru_cache(maxsize=512)
def _weights_cached(horizon: float, steps: int, t_index: int, H: float, rule: str) -> np.ndarray:
    h = horizon / steps
    t = t_index * h
    edges = np.arange(t_index + 1) * h
    edges[-1] = t
    m0, g = kernel_moments(t, edges[:-1], edges[1:], H)
    w = m0 / h
    if rule == "drift_exact" and t_index >= 2 and abs(2.0 * H - 1.0) > _HALF_TOL:
        q = 2.0 * H
        d = _power_steps(t_index, q) * h**q  # increments of s^q per cell
        G = g - (d / h) * m0  # int_cell l (d/ds s^q - cell slope)
        d2 = np.diff(d)  # second differences of s^q
        # cell i < j uses nodes t_{i-1}, t_i, t_{i+1}; cell j uses t_{j-2}, t_{j-1}, t_j
        r = G[:-1] / d2
        w[:-1] -= r
        w[1:] += r
        r_last = G[-1] / d2[-1]
        w[-1] += r_last
        w[-2] -= r_last
    w.setflags(write=False)
    return w


def transform_weights(grid: TimeGrid, t_index: int, H: float, rule: str = "drift_exact") -> np.ndarray:
    """Weights on the increments ``v(t_i) - v(t_{i-1})``, i = 1..t_index."""
    H = _check_hurst(H)
    t_index = grid.check_index(t_index)
    if rule not in RULES:
        raise ValidationError(f"unknown quadrature rule {rule!r}; choose from {RULES}")
    return _weights_cached(grid.horizon, grid.steps, t_index, H, rule)


def transform_path(v, grid: TimeGrid, t_index: int, H: float, rule: str = "drift_exact"):
    """``v~(t_index)`` for a path (or a batch of paths along leading axes)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != grid.steps + 1:
        raise ValidationError(f"path length {v.shape[-1]} does not match grid ({grid.steps + 1})")
    w = transform_weights(grid, t_index, H, rule)
    out = np.diff(v[..., : t_index + 1], axis=-1) @ w
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=16)
def _matrix_cached(horizon: float, steps: int, H: float, rule: str) -> np.ndarray:
    mat = np.zeros((steps, steps))
    grid = TimeGrid(horizon, steps)
    for j in range(1, steps + 1):
        mat[j - 1, :j] = transform_weights(grid, j, H, rule)
    mat.setflags(write=False)
    return mat


def transform_matrix(grid: TimeGrid, H: float, rule: str = "drift_exact") -> np.ndarray:
    """Lower-triangular matrix whose row j-1 holds the weights for ``t_j``."""
    H = _check_hurst(H)
    if rule not in RULES:
        raise ValidationError(f"unknown quadrature rule {rule!r}; choose from {RULES}")
    return _matrix_cached(grid.horizon, grid.steps, H, rule)


@dataclass(frozen=True)
class TransformedPath:
    grid: TimeGrid
    values: np.ndarray
    quadrature: str


def transform_series(v, grid: TimeGrid, H: float, rule: str = "drift_exact") -> TransformedPath:
    """``v~`` at every grid point (``values[0] = 0``)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.steps + 1,):
        raise ValidationError("path length does not match grid")
    vals = np.zeros(grid.steps + 1)
    vals[1:] = transform_matrix(grid, H, rule) @ np.diff(v)
    return TransformedPath(grid=grid, values=vals, quadrature=rule)


def weights_csv_rows(grid: TimeGrid, t_index: int, H: float, rule: str = "drift_exact"):
    w = transform_weights(grid, t_index, H, rule)
    return [(i + 1, float(x)) for i, x in enumerate(w)]
