"""Acceleration of mode-indexed estimator sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .mle import EstimateReport

AITKEN_VARIANTS = ("modified", "standard")
DENOMINATOR_TOL = 1e-12


@dataclass(frozen=True)
class EstimateSequence:
    """Mode estimates ``values[k-1]`` for k = 1..N at horizon ``horizon``."""

    values: np.ndarray
    horizon: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", vals)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.size != vals.size:
                raise ValidationError("weights and values differ in length")
            if np.any(w < 0):
                raise ValidationError("weights must be non-negative")
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.values.size


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean along the last axis of ``values``."""
    total = weights.sum()
    if not total > 0:
        raise ValidationError("weights sum to zero")
    return values @ weights / total


def weighted_average(seq: EstimateSequence, N: int | None = None) -> EstimateReport:
    N = len(seq) if N is None else int(N)
    if not 1 <= N <= len(seq):
        raise ValidationError(f"prefix length {N} outside 1..{len(seq)}")
    w = np.ones(N) if seq.weights is None else seq.weights[:N]
    return EstimateReport(
        estimator_kind="weighted_avg",
        value=float(weighted_mean(seq.values[:N], w)),
        mode_indices=tuple(range(1, N + 1)),
        horizon=seq.horizon,
    )


def aitken_denominator(a0, a1, a2, variant: str):
    if variant == "modified":
        return a2 + 2.0 * a1 - a0
    if variant == "standard":
        return a2 - 2.0 * a1 + a0
    raise ValidationError(f"unknown Aitken variant {variant!r}; choose from {AITKEN_VARIANTS}")


def aitken_values(a0, a1, a2, variant: str = "modified"):
    """Element-wise Aitken transform; NaN where the denominator is negligible."""
    a0, a1, a2 = (np.asarray(x, dtype=float) for x in (a0, a1, a2))
    den = aitken_denominator(a0, a1, a2, variant)
    scale = np.maximum(1.0, np.maximum(np.abs(a0), np.maximum(np.abs(a1), np.abs(a2))))
    ok = np.abs(den) > DENOMINATOR_TOL * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, a0 - (a1 - a0) ** 2 / np.where(ok, den, 1.0), np.nan)
    return out


def aitken(seq: EstimateSequence, k: int, variant: str = "modified") -> EstimateReport:
    """Delta-squared transform at index k (1-based), using entries k, k+1, k+2.

    ``variant="modified"`` uses the denominator ``a_{k+2} + 2 a_{k+1} - a_k``;
    ``variant="standard"`` uses the usual second difference
    ``a_{k+2} - 2 a_{k+1} + a_k``.
    """
    k = int(k)
    if k < 1 or k + 2 > len(seq):
        raise ValidationError(f"Aitken needs indices k..k+2 within 1..{len(seq)}, got k={k}")
    a0, a1, a2 = seq.values[k - 1 : k + 2]
    den = aitken_denominator(a0, a1, a2, variant)
    value = float(aitken_values(a0, a1, a2, variant))
    if np.isnan(value):
        raise NumericalError(
            f"Aitken ({variant}) denominator {den:.3e} is numerically zero at k={k}; "
            "refusing to return an amplified value"
        )
    return EstimateReport(
        estimator_kind="aitken",
        value=value,
        mode_indices=(k, k + 1, k + 2),
        horizon=seq.horizon,
        notes=f"variant={variant}",
    )
