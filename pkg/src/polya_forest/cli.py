"""Command-line interface: ``polya-forest <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure, 4 property violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .dyadic import TptParams, strict_floor
from .errors import DataError, PolyaForestError, UsageError
from .kernel import KernelTable
from .manifest import RunManifest
from .metrics import METRICS, distance, kl_and_v
from .priors import (
    DEFAULT_TREES_CAP,
    VARIANTS,
    AdaptiveSchedule,
    PriorConfig,
    cutoff_depth,
    effective_trees,
    sample_prior,
)
from .rng import stream

# ω entries corrupted by the hidden fault-injection flag
FAULTY_OMEGAS = {(1, 1): Fraction(1, 3), (2, 1): Fraction(1, 5), (3, 2): Fraction(1, 2)}


class Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as exceptions (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path, header, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n",
                    encoding="utf-8")
    return path


def _read_rows(path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        return [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]


def _is_header(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return True
    return False


def read_data_csv(path):
    """One observation per line, optional header ``x``."""
    from .posterior import Dataset

    rows = _read_rows(path)
    if rows and _is_header(rows[0][1]):
        head = [c.strip() for c in rows[0][1]]
        if head != ["x"]:
            raise DataError(f"{path}:{rows[0][0]}: expected header 'x', got {','.join(head)}")
        rows = rows[1:]
    values = []
    for line, row in rows:
        if len(row) != 1:
            raise DataError(f"{path}:{line}: expected one value, got {len(row)}")
        try:
            v = float(row[0])
        except ValueError:
            raise DataError(f"{path}:{line}: not a number: {row[0]!r}") from None
        if not (0.0 <= v < 1.0):
            raise DataError(f"{path}:{line}: observation {v!r} outside [0, 1)")
        values.append(v)
    if not values:
        raise DataError(f"{path}: no observations")
    return Dataset(np.array(values))


def read_grid_csv(path):
    """Grid density from ``x,f`` rows of cell averages on a uniform grid."""
    from .aggregate import GridDensity

    rows = _read_rows(path)
    col = 1
    if rows and _is_header(rows[0][1]):
        head = [c.strip() for c in rows[0][1]]
        col = head.index("f") if "f" in head else (1 if len(head) > 1 else 0)
        rows = rows[1:]
    vals = []
    for line, row in rows:
        try:
            vals.append(float(row[col] if len(row) > col else row[-1]))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{line}: malformed row {','.join(row)!r}") from None
    if not vals:
        raise DataError(f"{path}: no rows")
    return GridDensity(np.array(vals))


def _beta(text: str, depth: int) -> TptParams:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--beta must be a comma-separated list of reals, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * depth
    if len(vals) != depth:
        raise UsageError(f"--beta needs 1 or {depth} values, got {len(vals)}")
    return TptParams(depth, np.array(vals))


def _check_prior_flags(args) -> None:
    kind = args.prior
    if kind != "dpa" and getattr(args, "trees", None) is not None:
        raise UsageError(f"--trees only applies to --prior dpa, not {kind}")
    if kind == "spt" and getattr(args, "u_bound", None) is not None:
        raise UsageError("--u-bound does not apply to --prior spt")
    if kind != "spt" and getattr(args, "tau", None) is not None:
        raise UsageError(f"--tau only applies to --prior spt, not {kind}")


def _grid_output(density, grid: int):
    x = (np.arange(grid) + 0.5) / grid
    return x, np.asarray(density.cell_averages(grid), dtype=float)


def cmd_sample_prior(args) -> int:
    _check_prior_flags(args)
    if args.prior == "spt" and args.tau is None:
        raise UsageError("--prior spt needs --tau")
    t0 = time.perf_counter()
    cfg = PriorConfig(
        args.prior, args.m, args.depth, _beta(args.beta, args.depth),
        trees=args.trees if args.prior == "dpa" else None,
        bound=args.u_bound if args.u_bound is not None else math.inf,
        tau=args.tau,
    )
    density = sample_prior(cfg, stream(args.seed, "sample-prior", 0))
    x, f = _grid_output(density, args.grid)
    out = write_csv(args.out, ["x", "f"], [x, f])
    man = RunManifest("sample-prior", _config_dict(args), args.seed)
    man.stage_times["sample"] = time.perf_counter() - t0
    man.add_output(out)
    man.write(out)
    return 0


def _config_dict(args) -> dict:
    skip = {"func", "inject_omega_fault"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _adaptive_schedule(args, n: int) -> AdaptiveSchedule:
    for flag in ("depth", "m", "trees", "u_bound", "tau"):
        if getattr(args, flag) is not None:
            raise UsageError(f"--{flag.replace('_', '-')} is fixed by the schedule under --adaptive")
    if n < 3:
        raise UsageError(f"--adaptive needs at least 3 observations, got {n}")
    top = args.max_depth or max(2, math.ceil(math.log2(n / math.log(n)) / 2))
    # per-level values extend with the last one at deeper levels
    tpt = _beta(args.beta, len(args.beta.split(",")))
    base = PriorConfig(args.prior, 0, tpt.depth, tpt, **({"tau": 1.0} if args.prior == "spt" else {}))
    return AdaptiveSchedule(VARIANTS[args.prior], n, top, base, trees_cap=args.trees_cap)


def _fixed_config(args, n: int, warnings: list) -> PriorConfig:
    if args.max_depth is not None:
        raise UsageError("--max-depth only applies with --adaptive")
    if args.depth is None and args.alpha is None:
        raise UsageError("need --depth or --alpha to fix the tree depth")
    depth = args.depth if args.depth is not None else max(1, cutoff_depth(n, args.alpha))
    m = args.m if args.m is not None else (strict_floor(args.alpha) if args.alpha else 0)
    tpt = _beta(args.beta, depth)
    if args.prior == "spt":
        return PriorConfig("spt", m, depth, tpt, tau=args.tau or 1.0 / math.sqrt(n))
    bound = args.u_bound if args.u_bound is not None else math.log(n)
    if args.prior == "cpa":
        return PriorConfig("cpa", m, depth, tpt, bound=bound)
    requested = args.trees if args.trees is not None else n
    q = effective_trees(requested, depth, args.trees_cap)
    if q < requested:
        warnings.append(f"trees capped from {requested} to {q}")
    return PriorConfig("dpa", m, depth, tpt, trees=q, bound=bound)


def cmd_fit(args) -> int:
    from .posterior import run_chain

    _check_prior_flags(args)
    t0 = time.perf_counter()
    data = read_data_csv(args.data)
    warnings: list = []
    if args.adaptive:
        sched, cfg = _adaptive_schedule(args, data.n), None
    else:
        sched, cfg = None, _fixed_config(args, data.n, warnings)
    t1 = time.perf_counter()
    trace, summary = run_chain(
        data, cfg, sched, iters=args.iters, burnin=args.burnin, seed=args.seed,
        grid=args.grid, thin=args.thin, level=args.level, trees_cap=args.trees_cap,
    )
    t2 = time.perf_counter()
    resolved = _describe_prior(cfg, sched)
    run = {
        "prior": resolved,
        "n": data.n,
        "iters": args.iters,
        "burnin": args.burnin,
        "seed": args.seed,
        "summary": summary.to_dict(),
        "trace": {"log_lik": trace.log_lik.tolist(), "depth": trace.depth.tolist()},
    }
    outputs = [write_json(args.out, run)]
    if args.density_out:
        x = (np.arange(args.grid) + 0.5) / args.grid
        outputs.append(write_csv(args.density_out, ["x", "f", "lower", "upper"],
                                 [x, summary.mean, summary.lower, summary.upper]))
    for path in outputs:
        man = RunManifest("fit", dict(_config_dict(args), resolved_prior=resolved), args.seed)
        man.stage_times = {"load": t1 - t0, "mcmc": t2 - t1}
        man.warnings = warnings + summary.warnings
        for p in outputs:
            man.add_output(p)
        man.write(path)
    return 0


def _describe_prior(cfg, sched) -> dict:
    if sched is not None:
        return {
            "variant": sched.variant, "n": sched.n, "max_depth": sched.max_depth,
            "trees_cap": sched.trees_cap,
            "orders": {str(l): sched.order(l) for l in range(1, sched.max_depth + 1)},
        }
    return {
        "kind": cfg.kind, "order": cfg.order, "depth": cfg.depth, "trees": cfg.trees,
        "bound": cfg.bound if math.isfinite(cfg.bound) else "inf", "tau": cfg.tau,
        "beta": cfg.tpt.level_params.tolist(),
    }


def cmd_metrics(args) -> int:
    f, g = read_grid_csv(args.f), read_grid_csv(args.g)
    if args.metric == "kl":
        k, v = kl_and_v(f, g)
        result = {"K": k, "V": v}
        print(f"K={_fmt(k)}\nV={_fmt(v)}")
    else:
        d = distance(args.metric, f, g)
        result = {args.metric: d}
        print(f"{args.metric}={_fmt(d)}")
    if args.out:
        out = write_json(args.out, result)
        man = RunManifest("metrics", _config_dict(args))
        man.add_output(out)
        man.write(out)
    return 0


def cmd_rate_experiment(args) -> int:
    from .experiments.rates import RateSettings, rate_experiment
    from .experiments.truths import holder_density

    try:
        n_list = [int(v) for v in args.n.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--n must be a comma-separated list of integers, got {args.n!r}") from None
    truth = holder_density(args.alpha, args.truth, args.center)
    settings = RateSettings(iters=args.iters, burnin=args.burnin, thin=args.thin, grid=args.grid,
                            trees_cap=args.trees_cap, max_depth=args.max_depth)
    t0 = time.perf_counter()
    res = rate_experiment(truth, args.prior, n_list, args.replicates, args.seed,
                          args.adaptive, settings)
    cols = ["n", "replicate", "prior", "depth", "hellinger", "within_1eps", "within_2eps",
            "within_4eps", "ess", "seed", "warnings"]
    out = write_csv(args.out, cols, [[r[c] for r in res.rows] for c in cols])
    man = RunManifest("rate-experiment", _config_dict(args), args.seed)
    man.stage_times = {"total": time.perf_counter() - t0}
    man.stage_times.update({f"n={r['n']}/rep={r['replicate']}": r["wall_time"] for r in res.rows})
    man.results = {
        "slope": res.slope, "slope_se": res.slope_se, "intercept": res.intercept,
        "target": res.target, "median_hellinger": {str(k): v for k, v in res.medians().items()},
        "trees_caps": res.caps,
    }
    man.warnings = sorted({w for r in res.rows for w in r["warnings"].split(";") if w})
    man.add_output(out)
    man.write(out)
    print(f"slope={res.slope:.4f} (se {res.slope_se:.4f}, target {res.target:.4f})")
    return 0


def cmd_verify_lemmas(args) -> int:
    from .experiments.lemmas import raise_on_failure, verify_lemmas

    table = KernelTable(omega_overrides=FAULTY_OMEGAS) if args.inject_omega_fault else None
    t0 = time.perf_counter()
    report = verify_lemmas(args.seed, args.trials, table)
    for name, r in report["lemmas"].items():
        status = "ok" if r["ok"] else "FAIL"
        print(f"{name}: {status} trials={r['trials']} violations={r['violations']} "
              f"max_ratio={r['max_ratio']:.6g}")
    if args.out:
        out = write_json(args.out, report)
        man = RunManifest("verify-lemmas", _config_dict(args), args.seed)
        man.stage_times["total"] = time.perf_counter() - t0
        man.add_output(out)
        man.write(out)
    raise_on_failure(report)
    return 0


def cmd_kernel_table(args) -> int:
    from .kernel import kernel_eval

    if args.resolution < 1:
        raise UsageError("--resolution must be >= 1")
    x = np.arange(args.m * args.resolution + 1) / args.resolution
    out = write_csv(args.out, ["x", "value"], [x, kernel_eval(args.m, x)])
    man = RunManifest("kernel-table", _config_dict(args))
    man.add_output(out)
    man.write(out)
    return 0


def _prior_flags(p):
    p.add_argument("--prior", choices=("dpa", "cpa", "spt"), required=True)
    p.add_argument("--m", type=int, help="aggregation order")
    p.add_argument("--depth", type=int, help="tree depth L")
    p.add_argument("--trees", type=int, help="number of trees q (DPA only)")
    p.add_argument("--u-bound", type=float, help="coefficient bound U (DPA/CPA)")
    p.add_argument("--tau", type=float, help="density floor (SPT only)")
    p.add_argument("--beta", default="1", help="Beta parameters a_l, one value or one per level")


def build_parser() -> Parser:
    parser = Parser(prog="polya-forest", allow_abbrev=False,
                    description="Shifted Polya tree ensemble priors for density estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("sample-prior", help="draw one density from a prior", allow_abbrev=False)
    _prior_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_prior)

    p = sub.add_parser("fit", help="posterior MCMC for a data set", allow_abbrev=False)
    p.add_argument("--data", required=True)
    _prior_flags(p)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--trees-cap", type=int, default=DEFAULT_TREES_CAP)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--burnin", type=int, default=500)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--density-out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("metrics", help="distance between two grid densities", allow_abbrev=False)
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--metric", choices=METRICS + ("kl",), required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("rate-experiment", help="contraction-rate study", allow_abbrev=False)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--prior", choices=("dpa", "cpa", "spt"), required=True)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--n", default="500,2000,8000")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", choices=("cusp", "cos", "uniform"), default="cusp")
    p.add_argument("--center", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=1500)
    p.add_argument("--burnin", type=int, default=500)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--trees-cap", type=int, default=DEFAULT_TREES_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rate_experiment)

    p = sub.add_parser("verify-lemmas", help="randomized inequality checks", allow_abbrev=False)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--inject-omega-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("kernel-table", help="tabulate a kernel", allow_abbrev=False)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--resolution", type=int, required=True, help="points per unit length")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernel_table)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except PolyaForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
