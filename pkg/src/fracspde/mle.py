"""Maximum-likelihood drift estimators.

With ``v~`` the kernel transform of a log-path, a geometric fBM with known
volatility ``sigma`` has the closed-form MLE::

    theta_hat = v~(t) / (b1 t^(2-2H)) + sigma^2 H b2 / (b1 t^(1-2H))

and, because ``alpha_k = rho_k + theta nu_k`` is monotone in theta, mode k of
the SPDE gives::

    theta_hat_k = v~_k(t) / (nu_k b1 t^(2-2H)) + H b2 mu_k^2 / (nu_k b1 t^(1-2H)) - rho_k / nu_k
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IdentifiabilityError, ValidationError
from .fbm import TimeGrid
from .mkernel import kernel_constants, transform_path
from .solution import LogPaths, ModePaths, log_paths

ESTIMATOR_KINDS = (
    "mle_geometric",
    "mle_mode",
    "weighted_avg",
    "aitken",
    "exact_theta",
    "exact_hurst",
    "exact_joint",
)

CSV_HEADER = ("kind", "value", "value2", "modes", "T", "asymptotic_variance", "status", "notes")


@dataclass(frozen=True)
class EstimateReport:
    """An estimate with its provenance.

    ``value`` is a float, or a ``(theta, H)`` pair for ``exact_joint``.
    ``asymptotic_variance`` is the limit variance of ``T^(1-H) (est - theta0)``
    where one is defined; for mode estimates ``asymptotic_variance_k`` holds
    the limit variance of ``|nu_k / mu_k| (est - theta0)``.
    """

    estimator_kind: str
    value: float | tuple[float, float]
    mode_indices: tuple[int, ...]
    horizon: float
    asymptotic_variance: float | None = None
    asymptotic_variance_k: float | None = None
    notes: str = ""
    status: str = field(default="ok")

    def __post_init__(self):
        if self.estimator_kind not in ESTIMATOR_KINDS:
            raise ValidationError(f"unknown estimator kind {self.estimator_kind!r}")

    def csv_row(self) -> list:
        if isinstance(self.value, tuple):
            v1, v2 = self.value
        else:
            v1, v2 = self.value, None
        return [
            self.estimator_kind,
            v1,
            v2,
            " ".join(str(k) for k in self.mode_indices),
            self.horizon,
            self.asymptotic_variance,
            self.status,
            self.notes,
        ]


def geometric_mle_value(vt, t: float, sigma: float, H: float):
    """Closed-form MLE given the transformed path value(s) ``vt`` at time t."""
    kc = kernel_constants(H)
    return vt / (kc.b1 * t ** (2.0 - 2.0 * H)) + sigma**2 * H * kc.b2 / (kc.b1 * t ** (1.0 - 2.0 * H))


def mode_mle_value(vt, t: float, rho: float, nu: float, mu: float, H: float):
    """Mode MLE from ``v~_k(t)``: the geometric MLE of alpha_k, mapped back to theta."""
    return (geometric_mle_value(vt, t, mu, H) - rho) / nu


def mle_geometric(v, grid: TimeGrid, sigma: float, H: float, t_index: int | None = None) -> EstimateReport:
    """MLE of the drift of ``X_t = X_0 exp(theta t - sigma^2 t^2H / 2 + sigma W^H_t)``.

    ``v`` is the log-path ``ln(X_t / X_0)`` on ``grid``.
    """
    t_index = grid.steps if t_index is None else grid.check_index(t_index)
    t = grid.time(t_index)
    vt = transform_path(v, grid, t_index, H)
    b1 = kernel_constants(H).b1
    return EstimateReport(
        estimator_kind="mle_geometric",
        value=float(geometric_mle_value(vt, t, sigma, H)),
        mode_indices=(),
        horizon=t,
        asymptotic_variance=sigma**2 / b1**2,
    )


def mle_mode(paths: ModePaths | LogPaths, k: int, t_index: int | None = None) -> EstimateReport:
    lp = log_paths(paths) if isinstance(paths, ModePaths) else paths
    model, grid = lp.model, lp.grid
    i = model.check_mode(k)
    rho, nu, mu = model.effective_rho[i], model.nu[i], model.effective_mu[i]
    if nu == 0:
        raise IdentifiabilityError(f"nu_{k} = 0: theta does not enter mode {k}")
    if k not in lp.valid_modes:
        raise IdentifiabilityError(f"u_{k}(0) = 0: mode {k} is identically zero")
    t_index = grid.steps if t_index is None else grid.check_index(t_index)
    t = grid.time(t_index)
    H = model.hurst
    vt = transform_path(lp.mode(k), grid, t_index, H)
    b1 = kernel_constants(H).b1
    return EstimateReport(
        estimator_kind="mle_mode",
        value=float(mode_mle_value(vt, t, rho, nu, mu, H)),
        mode_indices=(int(k),),
        horizon=t,
        asymptotic_variance=mu**2 / (b1**2 * nu**2),
        asymptotic_variance_k=t ** (2.0 * H - 2.0) / b1**2,
    )


def mode_mle_variance(t: float, nu: float, mu: float, H: float) -> float:
    """Exact finite-horizon variance of the mode MLE (Gaussian error)."""
    b1 = kernel_constants(H).b1
    return mu**2 * t ** (2.0 * H - 2.0) / (b1**2 * nu**2)


def log_likelihood_ratio(
    vtilde, grid: TimeGrid, theta: float, sigma: float, H: float, t_index: int | None = None
) -> float:
    """Log Radon-Nikodym density of the transformed observation at drift ``theta``.

    ``vtilde`` holds ``v~(t_i)`` at every grid point.  With
    ``a(s) = theta (2-2H) b1 s^(1-2H) - sigma^2 H b2`` and
    ``d<sigma M>_s = sigma^2 (2-2H) s^(1-2H) ds``::

        log L = int a / d<sigma M> dv~ - 1/2 int a^2 / d<sigma M>

    The ``ds`` integral has a closed form.  In the ``dv~`` integral the
    theta-dependent part telescopes to ``theta b1 v~(t) / sigma^2``; the
    remaining ``s^(2H-1)`` integrand (singular at 0 for H < 1/2) is averaged
    exactly over each cell.
    """
    if sigma == 0:
        raise ValidationError("sigma must be non-zero")
    vtilde = np.asarray(vtilde, dtype=float)
    if vtilde.shape != (grid.steps + 1,):
        raise ValidationError("transformed path length does not match grid")
    t_index = grid.steps if t_index is None else grid.check_index(t_index)
    t = grid.time(t_index)
    kc = kernel_constants(H)
    b1, b2 = kc.b1, kc.b2
    s2 = sigma**2
    q = 2.0 * H
    pts = grid.points[: t_index + 1]
    cell_avg = np.diff(pts**q) / (q * grid.dt)
    singular = cell_avg @ np.diff(vtilde[: t_index + 1])
    stoch = theta * b1 * vtilde[t_index] / s2 - H * b2 / (2.0 - 2.0 * H) * singular
    quad = (
        theta**2 * b1**2 * t ** (2.0 - 2.0 * H) / s2
        - 2.0 * theta * b1 * H * b2 * t
        + s2 * H * b2**2 * t**q / (2.0 * (2.0 - 2.0 * H))
    )
    return float(stoch - 0.5 * quad)
