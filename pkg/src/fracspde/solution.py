"""Exact simulation of the Fourier modes.

Every mode is a geometric fBM driven by the same path ``W^H``::

    u_k(t) = u_k(0) exp((alpha_k + f_k) t - (mu_k + g_k)^2 t^(2H) / 2 + (mu_k + g_k) W^H(t))

The formula is evaluated pointwise, so there is no time-stepping error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fbm import FbmPath, TimeGrid
from .specmodel import SpectralModel


@dataclass(frozen=True)
class ModePaths:
    model: SpectralModel
    grid: TimeGrid
    u: np.ndarray
    driver: FbmPath | None = None
    # exact log-ratios kept from simulation; avoids log(0) after underflow
    log_ratio: np.ndarray | None = None


@dataclass(frozen=True)
class LogPaths:
    """``v[k-1, i] = ln(u_k(t_i) / u_k(0))``; rows of invalid modes are NaN."""

    model: SpectralModel
    grid: TimeGrid
    v: np.ndarray
    valid_modes: tuple[int, ...]

    def mode(self, k: int) -> np.ndarray:
        i = self.model.check_mode(k)
        if k not in self.valid_modes:
            raise ValidationError(f"mode {k} has u_k(0) = 0 and is unobservable")
        return self.v[i]


def mode_exponent(model: SpectralModel, t: np.ndarray, w: np.ndarray, modes=None) -> np.ndarray:
    """Log-growth of the selected modes (0-based ``modes``) given driver values.

    ``w`` may carry leading batch axes; the result has shape
    ``w.shape[:-1] + (len(modes), len(t))``.
    """
    idx = np.arange(model.num_modes) if modes is None else np.asarray(modes)
    drift = (model.alpha() + model.forcing_f)[idx][:, None]
    vol = model.effective_mu[idx][:, None]
    t = np.asarray(t, dtype=float)[None, :]
    w = np.asarray(w, dtype=float)[..., None, :]
    return drift * t - 0.5 * vol**2 * t ** (2.0 * model.hurst) + vol * w


def simulate_modes(model: SpectralModel, grid: TimeGrid, driver: FbmPath) -> ModePaths:
    if driver.grid != grid:
        raise ValidationError(f"driver grid {driver.grid} does not match {grid}")
    if driver.hurst != model.hurst:
        raise ValidationError(
            f"driver Hurst {driver.hurst} does not match model Hurst {model.hurst}"
        )
    expo = mode_exponent(model, grid.points, driver.values)
    u = model.u0[:, None] * np.exp(expo)
    expo.setflags(write=False)
    u.setflags(write=False)
    return ModePaths(model=model, grid=grid, u=u, driver=driver, log_ratio=expo)


def modes_from_values(model: SpectralModel, grid: TimeGrid, u) -> ModePaths:
    """Wrap observed Fourier coefficients (shape ``K x (n+1)``)."""
    u = np.array(u, dtype=float)
    if u.shape != (model.num_modes, grid.steps + 1):
        raise ValidationError(
            f"observed modes have shape {u.shape}, expected {(model.num_modes, grid.steps + 1)}"
        )
    return ModePaths(model=model, grid=grid, u=u)


def log_paths(paths: ModePaths) -> LogPaths:
    model = paths.model
    valid = model.valid_modes()
    if not valid:
        raise ValidationError("all initial values are zero: no observable modes")
    v = np.full(paths.u.shape, np.nan)
    rows = np.array(valid) - 1
    if paths.log_ratio is not None:
        v[rows] = paths.log_ratio[rows]
    else:
        ratio = paths.u[rows] / model.u0[rows, None]
        if np.any(ratio <= 0):
            raise ValidationError("observed mode changed sign or vanished; log undefined")
        v[rows] = np.log(ratio)
    v.setflags(write=False)
    return LogPaths(model=model, grid=paths.grid, v=v, valid_modes=valid)
