"""Diagonalizable SPDEs in spectral coordinates.

A model is the list of eigenvalues of the operators acting on a common
eigenbasis ``h_k``::

    du = [(A0 + theta A1) u + f] dt + (M u + g) dW^H

so that ``A0 h_k = rho_k h_k``, ``A1 h_k = nu_k h_k``, ``M h_k = mu_k h_k`` and
``Lambda h_k = lam_k h_k``.  Mode indices exposed by the public API are
1-based (k = 1..K), matching the usual Fourier numbering.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ValidationError

try:  # pragma: no cover - depends on interpreter version
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SCHEMA_VERSION = 1
BUILTIN_MODELS = ("heat_1d", "laplacian_power")


def _as_vector(name: str, values, n: int) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 1 and n > 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValidationError(f"{name} must have length {n}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """The SPDE in spectral coordinates.

    ``forcing_f`` and ``forcing_g`` are constant-in-time forcing coefficients;
    they default to zero.
    """

    lam: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    theta: float
    hurst: float
    u0: np.ndarray
    order_m: float = 1.0
    forcing_f: np.ndarray | None = None
    forcing_g: np.ndarray | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        n = np.size(self.lam)
        if n == 0:
            raise ValidationError("model must carry at least one mode")
        set_ = object.__setattr__
        set_(self, "lam", _as_vector("lambda", self.lam, n))
        for name in ("rho", "nu", "mu", "u0"):
            set_(self, name, _as_vector(name, getattr(self, name), n))
        for name in ("forcing_f", "forcing_g"):
            val = getattr(self, name)
            set_(self, name, _as_vector(name, np.zeros(n) if val is None else val, n))
        set_(self, "theta", float(self.theta))
        set_(self, "hurst", float(self.hurst))
        set_(self, "order_m", float(self.order_m))
        if not 0.0 < self.hurst < 1.0:
            raise ValidationError(f"hurst must lie in (0, 1), got {self.hurst}")
        if np.any(self.lam <= 0):
            raise ValidationError("lambda entries must be strictly positive")
        if self.order_m <= 0:
            raise ValidationError("order_m must be positive")
        if not np.isfinite(self.theta):
            raise ValidationError("theta must be finite")

    def __eq__(self, other):
        if not isinstance(other, SpectralModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in dataclasses.fields(self)
            if f.compare
        )

    __hash__ = object.__hash__

    @property
    def num_modes(self) -> int:
        return int(self.lam.size)

    def alpha(self, theta: float | None = None) -> np.ndarray:
        """Eigenvalues ``rho_k + theta nu_k`` of ``A0 + theta A1``."""
        th = self.theta if theta is None else float(theta)
        return self.rho + th * self.nu

    # Forcing enters each mode exactly like a shift of rho and mu.
    @property
    def effective_rho(self) -> np.ndarray:
        return self.rho + self.forcing_f

    @property
    def effective_mu(self) -> np.ndarray:
        return self.mu + self.forcing_g

    @property
    def has_forcing(self) -> bool:
        return bool(np.any(self.forcing_f) or np.any(self.forcing_g))

    def valid_modes(self) -> tuple[int, ...]:
        """1-based indices of modes with non-zero initial value."""
        return tuple(int(i) + 1 for i in np.flatnonzero(self.u0 != 0))

    def check_mode(self, k: int) -> int:
        """Validate a 1-based mode index and return its 0-based position."""
        if not 1 <= int(k) <= self.num_modes:
            raise ValidationError(f"mode index {k} outside 1..{self.num_modes}")
        return int(k) - 1

    def replace(self, **changes) -> "SpectralModel":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        """Explicit (non-builtin) model-file representation."""
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "theta": self.theta,
            "hurst": self.hurst,
            "order_m": self.order_m,
            "num_modes": self.num_modes,
            "lambda": self.lam.tolist(),
            "rho": self.rho.tolist(),
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
            "u0": self.u0.tolist(),
            "forcing_f": self.forcing_f.tolist(),
            "forcing_g": self.forcing_g.tolist(),
        }


# ---------------------------------------------------------------------------
# Parabolicity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParabolicityReport:
    holds: bool
    delta: float
    worst_mode_c1: int
    worst_value_c1: float
    worst_mode_c2: int
    worst_value_c2: float
    c1_bound: float
    c2_bound: float
    trend_c1: str
    trend_c2: str
    theta_range: tuple[float, float]

    def lines(self) -> list[str]:
        return [
            f"parabolic: {'yes' if self.holds else 'no'}",
            f"delta: {self.delta:.6g}",
            f"theta range: [{self.theta_range[0]:.6g}, {self.theta_range[1]:.6g}]",
            f"condition 1 worst mode {self.worst_mode_c1}: "
            f"{self.worst_value_c1:.6g} <= C1={self.c1_bound:.6g} (trend {self.trend_c1})",
            f"condition 2 worst mode {self.worst_mode_c2}: "
            f"{self.worst_value_c2:.6g} <= C2={self.c2_bound:.6g} (trend {self.trend_c2})",
        ]


def _trend(values: np.ndarray) -> str:
    if values.size < 2:
        return "constant"
    d = np.diff(values)
    scale = max(1.0, float(np.max(np.abs(values))))
    tol = 1e-12 * scale
    if np.all(np.abs(d) <= tol):
        return "constant"
    if np.all(d >= -tol):
        return "increasing"
    if np.all(d <= tol):
        return "decreasing"
    return "mixed"


def _tail_unbounded(values: np.ndarray) -> bool:
    """Heuristic for growth past the last carried mode.

    The expression is judged unbounded when its maximum sits at the final
    mode and the last increment is positive and no smaller than the one
    before it (growth that is not slowing down).
    """
    if values.size < 3 or int(np.argmax(values)) != values.size - 1:
        return False
    d_prev, d_last = values[-2] - values[-3], values[-1] - values[-2]
    return bool(d_last > 0 and d_last >= d_prev)


def validate_parabolicity(
    model: SpectralModel,
    delta: float,
    theta_range: tuple[float, float],
    c1: float | None = None,
    c2: float | None = None,
) -> ParabolicityReport:
    """Check the two eigenvalue-growth conditions over the carried modes.

    Both conditions are affine (or the absolute value of affine) in theta,
    so evaluating at the interval endpoints is enough.  When ``c1`` / ``c2``
    are not given the tightest observed constants are reported, unless the
    expression still grows at the last carried mode, in which case no
    finite constant is certified (bound reported as NaN).
    """
    if model.num_modes == 0:
        raise ValidationError("empty model")
    delta = float(delta)
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    lo, hi = (float(x) for x in theta_range)
    if not lo <= hi:
        raise ValidationError(f"empty theta range [{lo}, {hi}]")

    lam2m = model.lam ** (2.0 * model.order_m)
    ends = np.array([lo, hi])[:, None]
    alpha = model.rho[None, :] + ends * model.nu[None, :]
    e1 = np.max(np.abs(alpha) / lam2m, axis=0)
    e2 = np.max(2.0 * alpha + model.mu**2 + delta * lam2m, axis=0)

    k1, k2 = int(np.argmax(e1)), int(np.argmax(e2))
    w1, w2 = float(e1[k1]), float(e2[k2])
    if c1 is None:
        c1 = np.nan if _tail_unbounded(e1) else w1
    if c2 is None:
        c2 = np.nan if _tail_unbounded(e2) else w2
    holds = bool(w1 <= c1 and w2 <= c2)
    return ParabolicityReport(
        holds=holds,
        delta=delta,
        worst_mode_c1=k1 + 1,
        worst_value_c1=w1,
        worst_mode_c2=k2 + 1,
        worst_value_c2=w2,
        c1_bound=float(c1),
        c2_bound=float(c2),
        trend_c1=_trend(e1),
        trend_c2=_trend(e2),
        theta_range=(lo, hi),
    )


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def _param(params: Mapping, *names, default=None, required=True):
    for n in names:
        if n in params:
            return params[n]
    if required and default is None:
        raise ValidationError(f"missing model parameter {names[0]!r}")
    return default


def builtin_model(name: str, params: Mapping) -> SpectralModel:
    """Construct one of the packaged example equations.

    ``heat_1d``
        theta u_xx dt + u dW^H on (0, pi) with Dirichlet data:
        rho_k = 0, nu_k = -k^2, mu_k = 1, lam_k = k.
    ``laplacian_power``
        (Delta + theta) u dt + (1 - Delta)^r u dW^H in d dimensions, using the
        concrete spectrum sigma_k = -k^(2/d): rho_k = sigma_k, nu_k = 1,
        mu_k = (1 - sigma_k)^r, lam_k = (1 - sigma_k)^(1/2).
    """
    params = dict(params)
    K = int(_param(params, "K", "num_modes"))
    if K <= 0:
        raise ValidationError(f"K must be positive, got {K}")
    theta = float(_param(params, "theta"))
    H = float(_param(params, "H", "hurst"))
    if not 0.0 < H < 1.0:
        raise ValidationError(f"H must lie in (0, 1), got {H}")
    u0 = _as_vector("u0", _param(params, "u0", default=1.0), K)
    if not np.any(u0):
        raise ValidationError("u0 must have at least one non-zero entry")
    k = np.arange(1, K + 1, dtype=float)

    if name == "heat_1d":
        return SpectralModel(
            lam=k,
            rho=np.zeros(K),
            nu=-(k**2),
            mu=np.ones(K),
            theta=theta,
            hurst=H,
            u0=u0,
            order_m=float(params.get("m", 1.0)),
            name="heat_1d",
        )
    if name == "laplacian_power":
        r = float(_param(params, "r"))
        d = float(_param(params, "d", default=1.0))
        if d <= 0:
            raise ValidationError(f"dimension d must be positive, got {d}")
        sigma = -(k ** (2.0 / d))
        return SpectralModel(
            lam=np.sqrt(1.0 - sigma),
            rho=sigma,
            nu=np.ones(K),
            mu=(1.0 - sigma) ** r,
            theta=theta,
            hurst=H,
            u0=u0,
            order_m=float(params.get("m", 1.0)),
            name="laplacian_power",
        )
    raise ValidationError(f"unknown builtin model {name!r}; choose from {BUILTIN_MODELS}")


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def model_from_mapping(doc: Mapping) -> SpectralModel:
    """Build a model from a parsed model document.

    Either ``builtin`` (plus a ``params`` table) or the explicit sequences
    ``lambda, rho, nu, mu, u0`` with scalars ``theta, hurst`` must be given.
    """
    schema = doc.get("schema", SCHEMA_VERSION)
    if int(schema) != SCHEMA_VERSION:
        raise ValidationError(f"unsupported model schema {schema}")
    if "builtin" in doc:
        params = dict(doc.get("params", {}))
        return builtin_model(str(doc["builtin"]), params)
    missing = [k for k in ("lambda", "rho", "nu", "mu", "u0", "theta", "hurst") if k not in doc]
    if missing:
        raise ValidationError(f"model document missing keys: {', '.join(missing)}")
    model = SpectralModel(
        lam=doc["lambda"],
        rho=doc["rho"],
        nu=doc["nu"],
        mu=doc["mu"],
        theta=doc["theta"],
        hurst=doc["hurst"],
        u0=doc["u0"],
        order_m=doc.get("order_m", 1.0),
        forcing_f=doc.get("forcing_f"),
        forcing_g=doc.get("forcing_g"),
        name=str(doc.get("name", "custom")),
    )
    if "num_modes" in doc and int(doc["num_modes"]) != model.num_modes:
        raise ValidationError(
            f"num_modes={doc['num_modes']} disagrees with sequence length {model.num_modes}"
        )
    if not np.any(model.u0):
        raise ValidationError("u0 must have at least one non-zero entry")
    return model


def load_model(path: str | Path) -> SpectralModel:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return model_from_mapping(doc)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dump_model(model: SpectralModel, path: str | Path) -> None:
    doc = model.to_mapping()
    text = "".join(f"{k} = {_toml_value(v)}\n" for k, v in doc.items())
    Path(path).write_text(text)
