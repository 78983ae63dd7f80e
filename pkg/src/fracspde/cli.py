"""Command-line interface: ``fracspde {simulate,estimate,experiment,check}``.

Exit codes: 0 success, 1 usage error, 2 validation failure (including a
model that fails the parabolicity check), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, csvio
from .accel import EstimateSequence, aitken, weighted_average
from .errors import FracSpdeError, NumericalError, ValidationError
from .exact import exact_hurst, exact_joint, exact_theta
from .fbm import METHODS, TimeGrid, sample_fbm
from .harness import load_plan, run_experiment
from .mle import EstimateReport, mle_geometric, mle_mode
from .solution import log_paths, modes_from_values, simulate_modes
from .specmodel import BUILTIN_MODELS, builtin_model, dump_model, load_model, validate_parabolicity

OUT_ENV = "FRACSPDE_OUT"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

_ESTIMATOR_KEYS = {
    "mle_geometric": {"k", "t_index"},
    "mle_mode": {"k", "t_index"},
    "weighted_avg": {"N", "weights", "t_index"},
    "aitken": {"k", "variant", "t_index"},
    "exact_theta": {"k", "m", "t_index"},
    "exact_hurst": {"k", "m", "t_index"},
    "exact_joint": {"k", "m", "i", "j", "t_index"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_params(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--param expects key=value, got {item!r}")
        out[key.strip()] = _scalar(val.strip())
    return out


def parse_estimator(text: str) -> tuple[str, dict]:
    """``name:key=val,key=val``; list values are written ``a/b/c``."""
    name, _, rest = text.partition(":")
    if name not in _ESTIMATOR_KEYS:
        raise UsageError(f"unknown estimator {name!r}; choose from {', '.join(_ESTIMATOR_KEYS)}")
    params = {}
    for part in filter(None, rest.split(",")):
        key, sep, val = part.partition("=")
        if not sep:
            raise UsageError(f"estimator option {part!r} is not key=value")
        if key not in _ESTIMATOR_KEYS[name]:
            raise UsageError(f"{name} does not take option {key!r}")
        params[key] = [_scalar(v) for v in val.split("/")] if "/" in val else _scalar(val)
    return name, params


def _model(args):
    if bool(args.model) == bool(args.builtin):
        raise UsageError("give exactly one of --model FILE or --builtin NAME")
    if args.model:
        if args.param:
            raise UsageError("--param only applies to --builtin models")
        return load_model(args.model)
    return builtin_model(args.builtin, parse_params(args.param))


def _out_dir(args, fallback: str | None = None) -> Path:
    out = Path(args.out or fallback or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ValidationError(f"output directory {out} is not writable")
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    model = _model(args)
    grid = TimeGrid(args.T, args.steps)
    driver = sample_fbm(grid, model.hurst, args.seed, method=args.method)
    paths = simulate_modes(model, grid, driver)
    out = _out_dir(args)
    stem = args.prefix
    (out / f"{stem}_modes.csv").write_text(csvio.mode_paths_csv(paths, seed=args.seed))
    (out / f"{stem}_driver.csv").write_text(csvio.driver_csv(driver, seed=args.seed))
    dump_model(model, out / f"{stem}_model.toml")
    print(f"wrote {out / f'{stem}_modes.csv'} ({grid.steps + 1} rows, {model.num_modes} modes)")
    return EXIT_OK


def _run_estimator(name: str, params: dict, lp) -> EstimateReport:
    t_index = params.get("t_index")
    if name == "mle_mode":
        return mle_mode(lp, int(params["k"]), t_index)
    if name == "mle_geometric":
        k = int(params["k"])
        i = lp.model.check_mode(k)
        return mle_geometric(lp.mode(k), lp.grid, lp.model.effective_mu[i], lp.model.hurst, t_index)
    if name in ("weighted_avg", "aitken"):
        if name == "weighted_avg":
            N = int(params.get("N", lp.model.num_modes))
            ks = range(1, N + 1)
        else:
            ks = range(1, int(params["k"]) + 3)
        vals = [mle_mode(lp, k, t_index).value for k in ks]
        t = lp.grid.time(lp.grid.steps if t_index is None else t_index)
        w = params.get("weights")
        if w is not None:
            w = np.atleast_1d(np.asarray(w, dtype=float))[: len(vals)]
        seq = EstimateSequence(vals, t, w)
        if name == "weighted_avg":
            return weighted_average(seq, len(vals))
        return aitken(seq, int(params["k"]), params.get("variant", "modified"))
    k, m = int(params["k"]), int(params["m"])
    if name == "exact_theta":
        return exact_theta(lp, k, m, t_index)
    if name == "exact_hurst":
        return exact_hurst(lp, k, m, t_index)
    return exact_joint(lp, (k, m), (int(params["i"]), int(params["j"])), t_index)


def _required(name: str, params: dict):
    need = {"mle_mode": ["k"], "mle_geometric": ["k"], "aitken": ["k"],
            "exact_theta": ["k", "m"], "exact_hurst": ["k", "m"],
            "exact_joint": ["k", "m", "i", "j"]}.get(name, [])
    missing = [key for key in need if key not in params]
    if missing:
        raise UsageError(f"{name} requires option(s) {', '.join(missing)}")


def cmd_estimate(args) -> int:
    specs = [parse_estimator(s) for s in args.estimator]
    for name, params in specs:
        _required(name, params)
    model = _model(args)
    grid, u, meta = csvio.read_mode_paths(args.input)
    if u.shape[0] != model.num_modes:
        raise ValidationError(f"{args.input} has {u.shape[0]} modes, model has {model.num_modes}")
    scale = np.maximum(np.abs(model.u0), 1.0)
    if np.any(np.abs(u[:, 0] - model.u0) > 1e-12 * scale):
        raise ValidationError(f"{args.input}: initial values do not match the model's u0")
    lp = log_paths(modes_from_values(model, grid, u))
    results, codes = [], []
    for name, params in specs:
        try:
            results.append(_run_estimator(name, params, lp))
            codes.append(EXIT_OK)
        except NumericalError as exc:
            results.append((name, "numerical_error", str(exc)))
            codes.append(EXIT_NUMERICAL)
        except ValidationError as exc:
            results.append((name, "unidentifiable" if hasattr(exc, "suggestions") else "invalid", str(exc)))
            codes.append(EXIT_VALIDATION)
    out = _out_dir(args)
    path = out / f"{args.prefix}_estimates.csv"
    path.write_text(csvio.estimates_csv(results, seed=meta.get("seed"), H=model.hurst))
    for res in results:
        if isinstance(res, EstimateReport):
            print(f"{res.estimator_kind}: {res.value} ({res.status})")
        else:
            print(f"{res[0]}: {res[1]}: {res[2]}", file=sys.stderr)
    print(f"wrote {path}")
    if all(c != EXIT_OK for c in codes):
        return EXIT_NUMERICAL if EXIT_NUMERICAL in codes else EXIT_VALIDATION
    return EXIT_OK


def cmd_experiment(args) -> int:
    plan = load_plan(args.plan, replications=args.replications)
    table = run_experiment(plan, workers=args.workers)
    written = table.write(_out_dir(args, plan.output), raw=args.raw)
    flagged = [r for r in table.rows if r.flagged]
    for r in table.rows:
        print(f"H={r.hurst:g} {r.label}: mean={r.mean:.6g} bias={r.bias:.3g} se={r.se:.3g} mse={r.mse:.3g}"
              + (" FLAGGED" if r.flagged else ""))
    for p in written:
        print(f"wrote {p}")
    if flagged:
        print(f"{len(flagged)} roster entries failed in more than 1% of replications", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    model = _model(args)
    if args.theta_range is None:
        rng = (model.theta, model.theta)
    else:
        try:
            lo, hi = (float(x) for x in args.theta_range.split(","))
        except ValueError:
            raise UsageError("--theta-range expects LO,HI") from None
        rng = (lo, hi)
    report = validate_parabolicity(model, args.delta, rng, args.c1, args.c2)
    print("\n".join(report.lines()))
    return EXIT_OK if report.holds else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("model")
    src.add_argument("--model", help="model TOML file")
    src.add_argument("--builtin", choices=BUILTIN_MODELS, help="built-in model family")
    src.add_argument("--param", action="append", metavar="KEY=VALUE", help="built-in model parameter (repeatable)")
    common.add_argument("--T", type=float, default=1.0, help="time horizon (default 1)")
    common.add_argument("--steps", type=int, default=256, help="grid steps n (default 256)")
    common.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    common.add_argument("--method", choices=METHODS, default="circulant", help="fBM sampler")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")

    parser = _Parser(prog="fracspde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fracspde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate Fourier modes and write CSV")
    p.add_argument("--prefix", default="sim", help="file name prefix (default sim)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="run estimators on a mode-path CSV")
    p.add_argument("--input", required=True, help="mode-path CSV written by simulate")
    p.add_argument("--estimator", "-e", action="append", required=True,
                   help="e.g. mle_mode:k=1, exact_joint:k=1,m=2,i=2,j=3 (repeatable)")
    p.add_argument("--prefix", default="est", help="file name prefix (default est)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run a Monte Carlo plan")
    p.add_argument("plan", help="plan TOML file or bundled plan name")
    p.add_argument("--raw", action="store_true", help="also dump per-replication estimates")
    p.add_argument("--replications", type=int, help="override the plan's replication count")
    p.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", help=f"output directory (default plan output, ${OUT_ENV}, or .)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check", parents=[common], help="check the parabolicity conditions")
    p.add_argument("--delta", type=float, default=1.0, help="coercivity margin (default 1)")
    p.add_argument("--theta-range", help="LO,HI (default: the model's theta)")
    p.add_argument("--c1", type=float, help="bound for the first condition")
    p.add_argument("--c2", type=float, help="bound for the second condition")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fracspde: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"fracspde: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, FracSpdeError) as exc:
        print(f"fracspde: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
