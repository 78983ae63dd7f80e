"""Exact sampling of fractional Brownian motion on uniform grids.

Two samplers share one contract: the increments returned are an exact draw
from the Gaussian law of fBM increments on the grid.

* ``cholesky`` factors the n x n increment covariance; O(n^3) and kept as the
  reference method.
* ``circulant`` embeds the stationary increment covariance in a circulant
  matrix of size 2n and diagonalises it with the FFT (Davies-Harte).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.linalg import lapack

from .errors import NumericalError, ValidationError
from .streams import standard_normals, stream

METHODS = ("cholesky", "circulant")
DEFAULT_CHOLESKY_CAP = 4096
EMBEDDING_TOLERANCE = 1e-10


def _check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ValidationError(f"Hurst parameter must lie in (0, 1), got {H}")
    return H


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i T / n`` for ``i = 0..n``."""

    horizon: float
    steps: int

    def __post_init__(self):
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "steps", int(self.steps))
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 1:
            raise ValidationError(f"steps must be positive, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def time(self, index: int) -> float:
        return self.check_index(index) * self.dt

    def check_index(self, index: int, allow_zero: bool = False) -> int:
        index = int(index)
        lo = 0 if allow_zero else 1
        if not lo <= index <= self.steps:
            raise ValidationError(f"time index {index} outside {lo}..{self.steps}")
        return index


@dataclass(frozen=True)
class FbmPath:
    grid: TimeGrid
    hurst: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.steps + 1,):
            raise ValidationError("path length does not match grid")
        if self.values[0] != 0.0:
            raise ValidationError("fBM paths start at zero")


def fbm_covariance(t, s, H: float):
    """Covariance ``E W^H(t) W^H(s) = (t^2H + s^2H - |t-s|^2H) / 2``."""
    H = _check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValidationError("fbm_covariance needs t, s >= 0")
    h2 = 2.0 * H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(lags, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * H
    return 0.5 * (np.abs(k + 1.0) ** h2 + np.abs(k - 1.0) ** h2 - 2.0 * k**h2)


@lru_cache(maxsize=32)
def _cholesky_factor(steps: int, H: float) -> np.ndarray:
    """Lower Cholesky factor of the unit-step increment covariance."""
    gamma = fgn_autocovariance(np.arange(steps), H)
    idx = np.arange(steps)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise NumericalError(
            f"Cholesky factorization failed: leading minor of order {info} "
            f"is not positive definite (n={steps}, H={H})"
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise NumericalError(f"dpotrf argument error {info}")
    factor.setflags(write=False)
    return factor


@lru_cache(maxsize=32)
def _circulant_scales(steps: int, H: float) -> np.ndarray:
    """Square roots of the circulant eigenvalues, scaled for the FFT synthesis."""
    m = 2 * steps
    lags = np.concatenate([np.arange(steps + 1), np.arange(steps - 1, 0, -1)])
    eig = np.fft.fft(fgn_autocovariance(lags, H)).real
    low = eig.min()
    if low < -EMBEDDING_TOLERANCE:
        raise NumericalError(
            f"circulant embedding has negative eigenvalue {low:.3e} (n={steps}, H={H})"
        )
    eig = np.clip(eig, 0.0, None)
    scales = np.sqrt(eig / m)
    scales.setflags(write=False)
    return scales


def _circulant_increments(z: np.ndarray, steps: int, H: float) -> np.ndarray:
    """Map 2n standard normals per row onto n unit-step fGn increments."""
    scales = _circulant_scales(steps, H)
    m = 2 * steps
    w = np.zeros(z.shape[:-1] + (m,), dtype=complex)
    w[..., 0] = scales[0] * z[..., 0]
    w[..., steps] = scales[steps] * z[..., 1]
    if steps > 1:
        half = scales[1:steps] / np.sqrt(2.0)
        body = half * (z[..., 2 : 2 * steps : 2] + 1j * z[..., 3 : 2 * steps : 2])
        w[..., 1:steps] = body
        w[..., steps + 1 :] = np.conj(body[..., ::-1])
    return np.fft.fft(w, axis=-1).real[..., :steps]


def normals_per_path(steps: int, method: str) -> int:
    return steps if method == "cholesky" else 2 * steps


def increments_from_normals(z: np.ndarray, grid: TimeGrid, H: float, method: str) -> np.ndarray:
    """Scaled fBM increments from standard normals (last axis per path)."""
    n = grid.steps
    if method == "cholesky":
        unit = z @ _cholesky_factor(n, H).T
    elif method == "circulant":
        unit = _circulant_increments(z, n, H)
    else:
        raise ValidationError(f"unknown fBM method {method!r}; choose from {METHODS}")
    return unit * grid.dt**H


def _check_method(grid: TimeGrid, method: str, cholesky_cap: int) -> None:
    if method not in METHODS:
        raise ValidationError(f"unknown fBM method {method!r}; choose from {METHODS}")
    if method == "cholesky" and grid.steps > cholesky_cap:
        raise ValidationError(
            f"cholesky sampling limited to n <= {cholesky_cap}, got {grid.steps}"
        )


def sample_fbm_batch(
    grid: TimeGrid,
    H: float,
    seed: int,
    indices: Iterable[int],
    method: str = "circulant",
    cholesky_cap: int = DEFAULT_CHOLESKY_CAP,
) -> np.ndarray:
    """Sample one path per stream index; returns an array ``(len(indices), n+1)``."""
    H = _check_hurst(H)
    _check_method(grid, method, cholesky_cap)
    indices = list(indices)
    width = normals_per_path(grid.steps, method)
    z = np.empty((len(indices), width))
    for row, idx in enumerate(indices):
        z[row] = standard_normals(stream(seed, idx), width)
    inc = increments_from_normals(z, grid, H, method)
    out = np.zeros((len(indices), grid.steps + 1))
    np.cumsum(inc, axis=-1, out=out[:, 1:])
    return out


def sample_fbm(
    grid: TimeGrid,
    H: float,
    rng_seed: int,
    method: str = "circulant",
    index: int = 0,
    cholesky_cap: int = DEFAULT_CHOLESKY_CAP,
) -> FbmPath:
    """Sample an fBM path on ``grid`` from stream ``(rng_seed, index)``."""
    values = sample_fbm_batch(grid, H, rng_seed, [index], method, cholesky_cap)[0]
    return FbmPath(grid=grid, hurst=float(H), values=values)
