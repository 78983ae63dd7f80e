"""Closed-form exact estimators built from two or more modes.

All modes share one driver, so for modes k, m the combination
``mu_m v_k - mu_k v_m`` contains no noise at all::

    mu_m v_k - mu_k v_m = (rho_k mu_m - rho_m mu_k) t + theta alpha_km + beta_km t^(2H)

with ``alpha_km = (nu_k mu_m - nu_m mu_k) t`` and
``beta_km = (mu_m^2 mu_k - mu_k^2 mu_m) / 2``.  Solving this identity (or two
of them) gives theta, H, or both from the values at a single time t.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import IdentifiabilityError
from .mle import EstimateReport
from .solution import LogPaths
from .specmodel import SpectralModel

REL_TOL = 1e-12


def _negligible(x, *scales) -> bool:
    scale = sum(abs(s) for s in scales)
    return abs(x) <= REL_TOL * scale


@dataclass(frozen=True)
class ExactCoefficients:
    """Two-mode elimination coefficients at time t.

    ``delta_km = v_k mu_m - v_m mu_k - (rho_k mu_m - rho_m mu_k) t``, so that
    ``delta_km = theta alpha_km + beta_km t^(2H)`` holds exactly.
    """

    k: int
    m: int
    t: float
    alpha_km: float
    beta_km: float
    delta_km: float


def _coeffs(model: SpectralModel, k: int, m: int):
    i, j = model.check_mode(k), model.check_mode(m)
    rho, mu = model.effective_rho, model.effective_mu
    return rho[i], rho[j], model.nu[i], model.nu[j], mu[i], mu[j]


def exact_coefficients(lp: LogPaths, k: int, m: int, t_index: int) -> ExactCoefficients:
    rk, rm, nk, nm, mk, mm = _coeffs(lp.model, k, m)
    t = lp.grid.time(t_index)
    vk, vm = lp.mode(k)[t_index], lp.mode(m)[t_index]
    return ExactCoefficients(
        k=k,
        m=m,
        t=t,
        alpha_km=(nk * mm - nm * mk) * t,
        beta_km=0.5 * (mm**2 * mk - mk**2 * mm),
        delta_km=vk * mm - vm * mk - (rk * mm - rm * mk) * t,
    )


# --- array-level formulas (used directly by the Monte Carlo harness) -------


def theta_from_pair(vk, vm, t, rk, rm, nk, nm, mk, mm, H):
    num = mm * vk - mk * vm + (rm * mk - rk * mm) * t + 0.5 * (mk**2 * mm - mm**2 * mk) * t ** (2.0 * H)
    return num / (t * (nk * mm - nm * mk))


def tau_from_pair(vk, vm, t, ak, am, mk, mm):
    """``t^(2H)`` from two modes with known drifts ``ak``, ``am``."""
    return 2.0 * ((ak * mm - am * mk) * t - (mm * vk - mk * vm)) / (mk * mm * (mk - mm))


def joint_from_coefficients(d1, d2, a1, a2, b1, b2):
    """Solve ``d = theta a + b tau`` for two pairs; returns ``(theta, tau)``."""
    det = a1 * b2 - a2 * b1
    theta = (d1 * b2 - d2 * b1) / det
    tau = (d1 * a2 - d2 * a1) / (b1 * a2 - b2 * a1)
    return theta, tau


def hurst_from_tau(tau, t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(tau > 0, 0.5 * np.log(np.where(tau > 0, tau, 1.0)) / np.log(t), np.nan)


# --- feasibility -----------------------------------------------------------


def _theta_ok(nk, nm, mk, mm) -> bool:
    return not _negligible(nk * mm - nm * mk, nk * mm, nm * mk)


def _hurst_ok(mk, mm) -> bool:
    return mk != 0 and mm != 0 and not _negligible(mk - mm, mk, mm)


def _joint_det(model: SpectralModel, p1, p2) -> tuple[float, float]:
    def ab(k, m):
        _, _, nk, nm, mk, mm = _coeffs(model, k, m)
        return nk * mm - nm * mk, 0.5 * (mm**2 * mk - mk**2 * mm)

    a1, b1 = ab(*p1)
    a2, b2 = ab(*p2)
    return a1 * b2 - a2 * b1, abs(a1 * b2) + abs(a2 * b1)


@dataclass(frozen=True)
class PairFeasibility:
    theta_pairs: tuple[tuple[int, int], ...]
    hurst_pairs: tuple[tuple[int, int], ...]
    joint_pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]


def pair_feasibility(model: SpectralModel) -> PairFeasibility:
    """All mode pairs satisfying each estimator's non-degeneracy condition.

    Only modes with non-zero initial value are considered.
    """
    valid = model.valid_modes()
    pairs = list(combinations(valid, 2))
    theta_pairs, hurst_pairs = [], []
    for k, m in pairs:
        _, _, nk, nm, mk, mm = _coeffs(model, k, m)
        if _theta_ok(nk, nm, mk, mm):
            theta_pairs.append((k, m))
        if _hurst_ok(mk, mm):
            hurst_pairs.append((k, m))
    joint = []
    for p1, p2 in combinations(pairs, 2):
        det, scale = _joint_det(model, p1, p2)
        if not _negligible(det, scale):
            joint.append((p1, p2))
    return PairFeasibility(tuple(theta_pairs), tuple(hurst_pairs), tuple(joint))


# --- estimators -------------------------------------------------------------


def _default_index(lp: LogPaths, t_index):
    return lp.grid.steps if t_index is None else lp.grid.check_index(t_index)


def exact_theta(lp: LogPaths, k: int, m: int, t_index: int | None = None, H: float | None = None) -> EstimateReport:
    """Theta from modes k and m at one time; independent of H when mu_k = mu_m."""
    model = lp.model
    rk, rm, nk, nm, mk, mm = _coeffs(model, k, m)
    if not _theta_ok(nk, nm, mk, mm):
        usable = pair_feasibility(model).theta_pairs[:5]
        raise IdentifiabilityError(
            f"modes ({k}, {m}) are degenerate: nu_k mu_m = nu_m mu_k; try pairs {list(usable)}",
            suggestions=usable,
        )
    t_index = _default_index(lp, t_index)
    t = lp.grid.time(t_index)
    H = model.hurst if H is None else float(H)
    vk, vm = lp.mode(k)[t_index], lp.mode(m)[t_index]
    value = float(theta_from_pair(vk, vm, t, rk, rm, nk, nm, mk, mm, H))
    return EstimateReport(
        estimator_kind="exact_theta",
        value=value,
        mode_indices=(int(k), int(m)),
        horizon=t,
        asymptotic_variance=0.0,
    )


def _fallback_indices(lp: LogPaths, t_index):
    if t_index is not None:
        return [lp.grid.check_index(t_index)]
    n = lp.grid.steps
    return [n] + ([n // 2] if n % 2 == 0 else [])


def exact_hurst(lp: LogPaths, k: int, m: int, t_index: int | None = None, theta: float | None = None) -> EstimateReport:
    """H from modes k and m with theta known.

    Without an explicit ``t_index`` the final time is tried first, then T/2
    if the logarithm's argument is not positive there (or T = 1).
    """
    model = lp.model
    rk, rm, nk, nm, mk, mm = _coeffs(model, k, m)
    if not _hurst_ok(mk, mm):
        usable = pair_feasibility(model).hurst_pairs[:5]
        raise IdentifiabilityError(
            f"H is not identifiable from modes ({k}, {m}): need mu_k != mu_m, both non-zero",
            suggestions=usable,
        )
    th = model.theta if theta is None else float(theta)
    ak, am = rk + th * nk, rm + th * nm
    reasons = []
    for idx in _fallback_indices(lp, t_index):
        t = lp.grid.time(idx)
        if t == 1.0:
            reasons.append("t = 1 (log t = 0)")
            continue
        tau = tau_from_pair(lp.mode(k)[idx], lp.mode(m)[idx], t, ak, am, mk, mm)
        if not (tau > 0 and np.isfinite(tau)):
            reasons.append(f"log argument {tau:.3e} not positive at t={t:.6g}")
            continue
        return EstimateReport(
            estimator_kind="exact_hurst",
            value=float(hurst_from_tau(tau, t)),
            mode_indices=(int(k), int(m)),
            horizon=t,
            asymptotic_variance=0.0,
        )
    raise IdentifiabilityError("H unidentifiable: " + "; ".join(reasons))


def exact_joint(lp: LogPaths, pair1: tuple[int, int], pair2: tuple[int, int], t_index: int | None = None) -> EstimateReport:
    """Theta and H together from two mode pairs (three distinct modes suffice).

    Theta is returned whenever the 2x2 system is regular; if H cannot be
    extracted the report carries ``H = nan`` and explains why in ``notes``.
    """
    model = lp.model
    det, scale = _joint_det(model, pair1, pair2)
    if _negligible(det, scale):
        raise IdentifiabilityError(
            f"pairs {pair1} and {pair2} give a singular system (alpha_km beta_ij = alpha_ij beta_km)",
            suggestions=pair_feasibility(model).joint_pairs[:5],
        )
    notes = []
    for idx in _fallback_indices(lp, t_index):
        c1 = exact_coefficients(lp, *pair1, idx)
        c2 = exact_coefficients(lp, *pair2, idx)
        theta, tau = joint_from_coefficients(
            c1.delta_km, c2.delta_km, c1.alpha_km, c2.alpha_km, c1.beta_km, c2.beta_km
        )
        t = c1.t
        num = c1.delta_km * c2.alpha_km - c2.delta_km * c1.alpha_km
        if t == 1.0:
            notes.append("t = 1 (log t = 0)")
        elif _negligible(num, c1.delta_km * c2.alpha_km, c2.delta_km * c1.alpha_km):
            notes.append(f"delta_km alpha_ij = delta_ij alpha_km at t={t:.6g}")
        elif not (tau > 0 and np.isfinite(tau)):
            notes.append(f"log argument {tau:.3e} not positive at t={t:.6g}")
        else:
            return EstimateReport(
                estimator_kind="exact_joint",
                value=(float(theta), float(hurst_from_tau(tau, t))),
                mode_indices=tuple(sorted(set(pair1) | set(pair2))),
                horizon=t,
                asymptotic_variance=0.0,
            )
    # theta from the first attempted time; H not recoverable
    idx = _fallback_indices(lp, t_index)[0]
    c1 = exact_coefficients(lp, *pair1, idx)
    c2 = exact_coefficients(lp, *pair2, idx)
    theta, _ = joint_from_coefficients(
        c1.delta_km, c2.delta_km, c1.alpha_km, c2.alpha_km, c1.beta_km, c2.beta_km
    )
    return EstimateReport(
        estimator_kind="exact_joint",
        value=(float(theta), float("nan")),
        mode_indices=tuple(sorted(set(pair1) | set(pair2))),
        horizon=c1.t,
        asymptotic_variance=0.0,
        notes="H unidentifiable: " + "; ".join(notes),
        status="partial",
    )

