"""Monte Carlo experiments on the estimators.

A plan names a model, a set of Hurst indices, a grid resolution, the number
of replications and a roster of estimators evaluated at given horizons.
Replication ``r`` always draws its driver from stream ``(seed, r)``; the
same driver feeds every roster entry (paired comparisons), and the fBM
scaling property makes drivers at different horizons exact rescalings of
one another.

Replications are processed in chunks of ``chunk_size`` (a plan field) and
reassembled in index order, so summaries are bit-identical whatever the
number of workers.  The chunk size itself is part of the plan: BLAS may
block a batched product differently for different batch shapes, which can
move results in the last bits.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats

from .accel import AITKEN_VARIANTS, aitken_values
from .csvio import comment_line, render
from .errors import ValidationError
from .exact import hurst_from_tau, joint_from_coefficients, tau_from_pair, theta_from_pair
from .fbm import METHODS, TimeGrid, sample_fbm_batch
from .mkernel import kernel_constants, transform_weights
from .mle import geometric_mle_value, mode_mle_value, mode_mle_variance
from .solution import mode_exponent
from .specmodel import SpectralModel, model_from_mapping, tomllib
from .streams import StreamRegistry

ROSTER_KINDS = (
    "mle_geometric",
    "mle_mode",
    "weighted_avg",
    "aitken",
    "exact_theta",
    "exact_hurst",
    "exact_joint",
)
FAILURE_FLAG_FRACTION = 0.01
MIN_NORMALITY_SAMPLES = 100


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RosterEntry:
    estimator: str
    horizon: float
    params: tuple = ()
    label: str = ""

    def get(self, key, default=None):
        return dict(self.params).get(key, default)


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    model: SpectralModel
    hurst_values: tuple[float, ...]
    steps: int
    replications: int
    seed: int
    roster: tuple[RosterEntry, ...]
    method: str = "circulant"
    chunk_size: int = 1000
    output: str | None = None
    description: str = ""

    def __post_init__(self):
        if self.replications < 2:
            raise ValidationError(f"replications must be at least 2, got {self.replications}")
        if not self.roster:
            raise ValidationError("roster must not be empty")
        if self.method not in METHODS:
            raise ValidationError(f"unknown fBM method {self.method!r}")
        if self.steps < 2:
            raise ValidationError("steps must be at least 2")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be positive")
        for H in self.hurst_values:
            if not 0.0 < H < 1.0:
                raise ValidationError(f"Hurst value {H} outside (0, 1)")
        for entry in self.roster:
            _validate_entry(entry, self.model)


_ENTRY_KEYS = {
    "mle_geometric": {"k"},
    "mle_mode": {"k"},
    "weighted_avg": {"N", "weights"},
    "aitken": {"k", "variant"},
    "exact_theta": {"k", "m"},
    "exact_hurst": {"k", "m"},
    "exact_joint": {"k", "m", "i", "j"},
}


def _validate_entry(entry: RosterEntry, model: SpectralModel) -> None:
    if entry.estimator not in ROSTER_KINDS:
        raise ValidationError(f"unknown estimator {entry.estimator!r} in roster")
    if not entry.horizon > 0:
        raise ValidationError(f"roster horizon must be positive, got {entry.horizon}")
    p = dict(entry.params)
    extra = set(p) - _ENTRY_KEYS[entry.estimator]
    if extra:
        raise ValidationError(f"{entry.estimator}: unexpected keys {sorted(extra)}")
    K = model.num_modes
    modes = []
    if entry.estimator in ("mle_geometric", "mle_mode", "aitken"):
        modes.append(p.get("k"))
    if entry.estimator in ("exact_theta", "exact_hurst", "exact_joint"):
        modes += [p.get("k"), p.get("m")]
    if entry.estimator == "exact_joint":
        modes += [p.get("i"), p.get("j")]
    if entry.estimator == "aitken":
        if p.get("k") is not None:
            modes.append(int(p["k"]) + 2)
        if p.get("variant", "standard") not in AITKEN_VARIANTS:
            raise ValidationError(f"aitken variant must be one of {AITKEN_VARIANTS}")
    if entry.estimator == "weighted_avg":
        modes.append(p.get("N"))
        w = p.get("weights")
        if w is not None and len(w) < int(p.get("N", 0)):
            raise ValidationError("weighted_avg: fewer weights than N")
    for k in modes:
        if k is None:
            raise ValidationError(f"{entry.estimator}: missing mode index")
        if not 1 <= int(k) <= K:
            raise ValidationError(f"{entry.estimator}: mode {k} outside 1..{K}")


def _entry_label(estimator: str, horizon: float, params: Mapping) -> str:
    inner = ",".join(
        f"{k}={'/'.join(map(str, v)) if isinstance(v, (list, tuple)) else v}"
        for k, v in params.items()
    )
    return f"{estimator}({inner})@T={horizon:g}"


def plan_from_mapping(doc: Mapping) -> ExperimentPlan:
    if int(doc.get("schema", 1)) != 1:
        raise ValidationError(f"unsupported plan schema {doc.get('schema')}")
    for key in ("name", "model", "roster", "replications", "seed", "steps"):
        if key not in doc:
            raise ValidationError(f"plan missing key {key!r}")
    hurst = doc.get("hurst")
    mdoc = dict(doc["model"])
    if hurst is not None:
        hurst = hurst if isinstance(hurst, list) else [hurst]
        if not hurst:
            raise ValidationError("plan 'hurst' list is empty")
        if "builtin" in mdoc:
            params = dict(mdoc.get("params", {}))
            params.setdefault("H", float(hurst[0]))
            mdoc["params"] = params
        else:
            mdoc.setdefault("hurst", float(hurst[0]))
    model = model_from_mapping(mdoc)
    hurst = tuple(float(h) for h in (hurst or [model.hurst]))
    roster = []
    for item in doc["roster"]:
        item = dict(item)
        est = item.pop("estimator", None)
        if est is None:
            raise ValidationError("roster entry without 'estimator'")
        horizons = item.pop("T", 1.0)
        label = item.pop("label", None)
        for T in horizons if isinstance(horizons, list) else [horizons]:
            params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in item.items()}
            roster.append(
                RosterEntry(
                    estimator=str(est),
                    horizon=float(T),
                    params=tuple(sorted(params.items())),
                    label=label or _entry_label(str(est), float(T), params),
                )
            )
    return ExperimentPlan(
        name=str(doc["name"]),
        model=model,
        hurst_values=hurst,
        steps=int(doc["steps"]),
        replications=int(doc["replications"]),
        seed=int(doc["seed"]),
        roster=tuple(roster),
        method=str(doc.get("method", "circulant")),
        chunk_size=int(doc.get("chunk_size", 1000)),
        output=doc.get("output"),
        description=str(doc.get("description", "")),
    )


def bundled_plans() -> list[str]:
    root = resources.files("fracspde") / "plans"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_plan(source: str | Path, replications: int | None = None) -> ExperimentPlan:
    """Load a plan from a TOML file or by bundled name."""
    path = Path(source)
    if path.is_file():
        data = path.read_bytes()
    else:
        res = resources.files("fracspde") / "plans" / f"{source}.toml"
        if not res.is_file():
            raise ValidationError(
                f"no plan file {source!r} and no bundled plan of that name "
                f"(bundled: {', '.join(bundled_plans())})"
            )
        data = res.read_bytes()
    try:
        doc = tomllib.loads(data.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"plan {source}: {exc}") from exc
    if replications is not None:
        doc["replications"] = replications
    return plan_from_mapping(doc)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class _Context:
    """Per-(H, T) data shared by roster entries within one chunk."""

    model: SpectralModel
    grid: TimeGrid
    w: np.ndarray
    _v: dict = field(default_factory=dict)
    _vt: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.grid.horizon

    def v_path(self, k: int) -> np.ndarray:
        if k not in self._v:
            self._v[k] = mode_exponent(self.model, self.grid.points, self.w, [k - 1])[:, 0, :]
        return self._v[k]

    def v_at(self, k: int, idx: int) -> np.ndarray:
        return self.v_path(k)[:, idx]

    def vtilde(self, k: int) -> np.ndarray:
        if k not in self._vt:
            wts = transform_weights(self.grid, self.grid.steps, self.model.hurst)
            self._vt[k] = np.diff(self.v_path(k), axis=-1) @ wts
        return self._vt[k]

    def mode_mle(self, k: int) -> np.ndarray:
        m = self.model
        i = k - 1
        return mode_mle_value(
            self.vtilde(k), self.T, m.effective_rho[i], m.nu[i], m.effective_mu[i], m.hurst
        )


def _h_index(grid: TimeGrid) -> int:
    n = grid.steps
    return n // 2 if abs(np.log(grid.horizon)) < 1e-12 else n


def _ratio_error_scale(model: SpectralModel, modes) -> np.ndarray:
    idx = np.asarray(modes) - 1
    return model.effective_mu[idx] / model.nu[idx]


def _evaluate(entry: RosterEntry, ctx: _Context) -> dict[str, np.ndarray]:
    m = ctx.model
    p = dict(entry.params)
    est = entry.estimator
    H, T = m.hurst, ctx.T
    if est == "mle_mode":
        return {"": ctx.mode_mle(int(p["k"]))}
    if est == "mle_geometric":
        k = int(p["k"])
        return {"": geometric_mle_value(ctx.vtilde(k), T, m.effective_mu[k - 1], H)}
    if est == "weighted_avg":
        N = int(p["N"])
        wts = np.asarray(p.get("weights") or np.ones(N), dtype=float)[:N]
        vals = np.stack([ctx.mode_mle(k) for k in range(1, N + 1)], axis=-1)
        return {"": vals @ wts / wts.sum()}
    if est == "aitken":
        k = int(p["k"])
        a = [ctx.mode_mle(j) for j in (k, k + 1, k + 2)]
        return {"": aitken_values(*a, variant=p.get("variant", "standard"))}
    if est == "exact_theta":
        k, j = int(p["k"]), int(p["m"])
        n = ctx.grid.steps
        r, nu, mu = m.effective_rho, m.nu, m.effective_mu
        with np.errstate(divide="ignore", invalid="ignore"):
            val = theta_from_pair(
                ctx.v_at(k, n), ctx.v_at(j, n), T,
                r[k - 1], r[j - 1], nu[k - 1], nu[j - 1], mu[k - 1], mu[j - 1], H,
            )
        return {"": np.where(np.isfinite(val), val, np.nan)}
    if est == "exact_hurst":
        k, j = int(p["k"]), int(p["m"])
        idx = _h_index(ctx.grid)
        t = ctx.grid.time(idx)
        a = m.alpha() + m.forcing_f
        mu = m.effective_mu
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = tau_from_pair(ctx.v_at(k, idx), ctx.v_at(j, idx), t, a[k - 1], a[j - 1], mu[k - 1], mu[j - 1])
        return {"": hurst_from_tau(tau, t)}
    if est == "exact_joint":
        idx = _h_index(ctx.grid)
        t = ctx.grid.time(idx)
        r, nu, mu = m.effective_rho, m.nu, m.effective_mu

        def coeffs(a, b):
            a, b = a - 1, b - 1
            alpha = (nu[a] * mu[b] - nu[b] * mu[a]) * t
            beta = 0.5 * (mu[b] ** 2 * mu[a] - mu[a] ** 2 * mu[b])
            delta = ctx.v_at(a + 1, idx) * mu[b] - ctx.v_at(b + 1, idx) * mu[a] - (r[a] * mu[b] - r[b] * mu[a]) * t
            return alpha, beta, delta

        a1, b1, d1 = coeffs(int(p["k"]), int(p["m"]))
        a2, b2, d2 = coeffs(int(p["i"]), int(p["j"]))
        with np.errstate(divide="ignore", invalid="ignore"):
            theta, tau = joint_from_coefficients(d1, d2, a1, a2, b1, b2)
        theta = np.where(np.isfinite(theta), theta, np.nan)
        return {"theta": theta, "H": hurst_from_tau(tau, t)}
    raise ValidationError(f"unknown estimator {est!r}")  # pragma: no cover


def _truth_and_variance(entry: RosterEntry, model: SpectralModel, component: str):
    """True parameter and exact variance of the estimate (NaN when undefined)."""
    p = dict(entry.params)
    est, H, T = entry.estimator, model.hurst, entry.horizon
    if est.startswith("exact"):
        truth = H if (est == "exact_hurst" or component == "H") else model.theta
        return truth, 0.0
    b1 = kernel_constants(H).b1
    unit = T ** (2.0 * H - 2.0) / b1**2  # variance of M_T / (b1 T^(2-2H))
    if est == "mle_mode":
        k = int(p["k"])
        return model.theta, mode_mle_variance(T, model.nu[k - 1], model.effective_mu[k - 1], H)
    if est == "mle_geometric":
        k = int(p["k"])
        return float(model.alpha()[k - 1] + model.forcing_f[k - 1]), model.effective_mu[k - 1] ** 2 * unit
    if est == "weighted_avg":
        N = int(p["N"])
        wts = np.asarray(p.get("weights") or np.ones(N), dtype=float)[:N]
        scale = _ratio_error_scale(model, range(1, N + 1)) @ wts / wts.sum()
        return model.theta, float(scale**2 * unit)
    if est == "aitken":
        k = int(p["k"])
        if p.get("variant", "standard") != "standard":
            return model.theta, np.nan
        e0, e1, e2 = _ratio_error_scale(model, (k, k + 1, k + 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = float(aitken_values(e0, e1, e2, "standard"))
        return model.theta, amp**2 * unit
    raise ValidationError(f"unknown estimator {est!r}")  # pragma: no cover


def normality_check(errors, scale: float) -> tuple[float, float]:
    """One-sample KS test of ``errors / scale`` against the standard normal."""
    errors = np.asarray(errors, dtype=float)
    if not scale > 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    if errors.size < MIN_NORMALITY_SAMPLES:
        raise ValidationError(f"need at least {MIN_NORMALITY_SAMPLES} errors, got {errors.size}")
    if not np.all(np.isfinite(errors)):
        raise ValidationError("errors contain non-finite values")
    if np.ptp(errors) == 0:
        raise ValidationError("degenerate input: all errors are identical")
    res = stats.kstest(errors / scale, "norm", method="asymp")
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

SUMMARY_COLUMNS = (
    "plan", "H", "label", "estimator", "component", "T", "replications", "n_ok", "n_failed",
    "flagged", "true_value", "mean", "variance", "bias", "mse", "se",
    "theoretical_variance", "normalized_variance", "ks_distance", "ks_pvalue",
)


@dataclass(frozen=True)
class SummaryRow:
    plan: str
    hurst: float
    label: str
    estimator: str
    component: str
    horizon: float
    replications: int
    n_ok: int
    n_failed: int
    flagged: bool
    true_value: float
    mean: float
    variance: float
    bias: float
    mse: float
    se: float
    theoretical_variance: float
    normalized_variance: float
    ks_distance: float
    ks_pvalue: float

    def as_list(self) -> list:
        return [
            self.plan, self.hurst, self.label, self.estimator, self.component, self.horizon,
            self.replications, self.n_ok, self.n_failed, int(self.flagged), self.true_value,
            self.mean, self.variance, self.bias, self.mse, self.se, self.theoretical_variance,
            self.normalized_variance, self.ks_distance, self.ks_pvalue,
        ]


def _summarize(plan_name, H, entry, component, values, truth, theo_var) -> SummaryRow:
    ok = np.isfinite(values)
    x = values[ok]
    n_ok = int(x.size)
    n_failed = int(values.size - n_ok)
    nan = float("nan")
    if n_ok >= 2:
        mean = float(np.mean(x))
        var = float(np.var(x, ddof=1))
        mse = float(np.mean((x - truth) ** 2))
        se = float(np.sqrt(var / n_ok))
    else:
        mean = float(x[0]) if n_ok else nan
        var = mse = se = nan
    norm_var = ks = pval = nan
    if theo_var > 0 and np.isfinite(theo_var) and n_ok >= MIN_NORMALITY_SAMPLES:
        err = x - truth
        norm_var = float(np.var(err / np.sqrt(theo_var), ddof=1))
        if np.ptp(err) > 0:
            ks, pval = normality_check(err, float(np.sqrt(theo_var)))
    label = entry.label + (f"[{component}]" if component else "")
    return SummaryRow(
        plan=plan_name, hurst=H, label=label, estimator=entry.estimator, component=component,
        horizon=entry.horizon, replications=int(values.size), n_ok=n_ok, n_failed=n_failed,
        flagged=n_failed > FAILURE_FLAG_FRACTION * values.size, true_value=float(truth),
        mean=mean, variance=var, bias=mean - truth, mse=mse, se=se,
        theoretical_variance=float(theo_var), normalized_variance=norm_var,
        ks_distance=ks, ks_pvalue=pval,
    )


@dataclass
class SummaryTable:
    plan: ExperimentPlan
    rows: list[SummaryRow]
    raw: dict[tuple[float, str], np.ndarray]
    streams: StreamRegistry

    def row(self, label: str, H: float | None = None) -> SummaryRow:
        for r in self.rows:
            if r.label == label and (H is None or r.hurst == H):
                return r
        raise KeyError(label)

    def header_comment(self) -> str:
        p = self.plan
        return comment_line(
            plan=p.name, seed=p.seed, H=list(p.hurst_values), steps=p.steps,
            method=p.method, replications=p.replications,
        )

    def to_csv(self) -> str:
        return render(self.header_comment(), SUMMARY_COLUMNS, (r.as_list() for r in self.rows))

    def raw_to_csv(self) -> str:
        keys = list(self.raw)
        header = ["replication"] + [f"H={h:g}:{lab}" for h, lab in keys]
        rows = ([r] + [self.raw[key][r] for key in keys] for r in range(self.plan.replications))
        return render(self.header_comment(), header, rows)

    def write(self, out_dir: str | Path, raw: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.plan.name}_summary.csv"]
        paths[0].write_text(self.to_csv())
        if raw:
            paths.append(out / f"{self.plan.name}_raw.csv")
            paths[1].write_text(self.raw_to_csv())
        return paths


def _run_chunk(plan: ExperimentPlan, model: SpectralModel, grids, start: int, stop: int):
    out = {}
    for T, grid in grids.items():
        w = sample_fbm_batch(grid, model.hurst, plan.seed, range(start, stop), plan.method)
        ctx = _Context(model=model, grid=grid, w=w)
        for pos, entry in enumerate(plan.roster):
            if entry.horizon == T:
                for comp, vals in _evaluate(entry, ctx).items():
                    out[(pos, comp)] = np.asarray(vals, dtype=float)
    return out


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> SummaryTable:
    """Run every roster entry over all replications and Hurst values."""
    registry = StreamRegistry()
    for r in range(plan.replications):
        registry.claim(plan.seed, r, owner=r)
    chunks = [
        (s, min(s + plan.chunk_size, plan.replications))
        for s in range(0, plan.replications, plan.chunk_size)
    ]
    rows, raw = [], {}
    for H in plan.hurst_values:
        model = plan.model.replace(hurst=H)
        grids = {T: TimeGrid(T, plan.steps) for T in sorted({e.horizon for e in plan.roster})}
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda c: _run_chunk(plan, model, grids, *c), chunks))
        else:
            parts = [_run_chunk(plan, model, grids, *c) for c in chunks]
        for pos, comp in sorted(parts[0], key=lambda key: key[0]):
            entry = plan.roster[pos]
            values = np.concatenate([part[(pos, comp)] for part in parts])
            truth, theo_var = _truth_and_variance(entry, model, comp)
            row = _summarize(plan.name, H, entry, comp, values, truth, theo_var)
            rows.append(row)
            raw[(H, row.label)] = values
    return SummaryTable(plan=plan, rows=rows, raw=raw, streams=registry)
