"""Contraction-rate study and the spline approximation oracle."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..aggregate import GridDensity, spline_design
from ..dyadic import TptParams, strict_floor
from ..errors import ConfigurationError, NumericError
from ..metrics import distance
from ..posterior import run_chain
from ..priors import (
    DEFAULT_TREES_CAP,
    VARIANTS,
    AdaptiveSchedule,
    PriorConfig,
    cutoff_depth,
    effective_trees,
    order_fits,
)
from ..quadrature import cell_integrals
from ..rng import stream
from .truths import HolderTruth, sample_data

RADII = (1, 2, 4)


def worker_count(jobs: int) -> int:
    cap = os.environ.get("POLYA_FOREST_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            raise ConfigurationError(f"POLYA_FOREST_THREADS must be an integer, got {cap!r}")
    return max(1, min(n, jobs))


def rate(n: int, alpha: float) -> float:
    return (math.log(n) / n) ** (alpha / (2.0 * alpha + 1.0))


@dataclass
class RateSettings:
    iters: int = 1500
    burnin: int = 500
    thin: int = 5
    grid: int = 1024
    trees_cap: int = DEFAULT_TREES_CAP
    max_depth: int | None = None
    beta: float = 1.0


@dataclass
class RateResult:
    alpha: float
    kind: str
    adaptive: bool
    rows: list
    slope: float
    slope_se: float
    intercept: float
    target: float
    caps: list = field(default_factory=list)

    def medians(self) -> dict:
        out = {}
        for n in sorted({r["n"] for r in self.rows}):
            out[n] = float(np.median([r["hellinger"] for r in self.rows if r["n"] == n]))
        return out


def fixed_config(kind: str, alpha: float, n: int, settings: RateSettings) -> PriorConfig:
    """Non-adaptive prior at the cutoff depth with order ``strict_floor(alpha)``."""
    depth = max(1, cutoff_depth(n, alpha))
    m = strict_floor(alpha)
    while not order_fits(kind, m, depth):
        depth += 1
    tpt = TptParams.constant(depth, settings.beta)
    if kind == "spt":
        return PriorConfig("spt", m, depth, tpt, tau=1.0 / math.sqrt(n))
    if kind == "cpa":
        return PriorConfig("cpa", m, depth, tpt, bound=math.log(n))
    q = effective_trees(n, depth, settings.trees_cap)
    return PriorConfig("dpa", m, depth, tpt, trees=q, bound=math.log(n))


def schedule_for(kind: str, n: int, settings: RateSettings) -> AdaptiveSchedule:
    top = settings.max_depth or max(2, math.ceil(math.log2(n / math.log(n)) / 2))
    base = PriorConfig(kind, 0, 1, TptParams.constant(1, settings.beta),
                       **({"tau": 1.0} if kind == "spt" else {}))
    return AdaptiveSchedule(VARIANTS[kind], n, top, base, trees_cap=settings.trees_cap)


def _cell(args):
    truth, kind, adaptive, n, rep, seed, settings = args
    t0 = time.perf_counter()
    data = sample_data(truth, n, stream(seed, f"data/n={n}", rep))
    if adaptive:
        sched = schedule_for(kind, n, settings)
        cfg, requested = None, None
    else:
        sched = None
        cfg = fixed_config(kind, truth.alpha, n, settings)
        requested = n if kind == "dpa" else None
    trace, summary = run_chain(
        data, cfg, sched, iters=settings.iters, burnin=settings.burnin,
        seed=seed, replicate=rep + 1000 * n, grid=settings.grid, thin=settings.thin,
        trees_cap=settings.trees_cap,
    )
    mean = GridDensity(summary.mean)
    err = distance("hellinger", mean, truth)
    truth_cells = GridDensity(cell_integrals(truth.evaluate, settings.grid,
                                             truth.breakpoints()) * settings.grid)
    per_draw = np.array([distance("hellinger", GridDensity(s), truth_cells) for s in trace.samples])
    eps = rate(n, truth.alpha)
    row = {
        "n": n,
        "replicate": rep,
        "prior": kind + ("-adaptive" if adaptive else ""),
        "depth": int(np.bincount(trace.depth[settings.burnin :]).argmax()),
        "hellinger": err,
        "seed": seed,
        "ess": summary.ess,
    }
    for r in RADII:
        row[f"within_{r}eps"] = float(np.mean(per_draw <= r * eps))
    row["warnings"] = ";".join(summary.warnings)
    cap = None
    if adaptive and kind == "dpa":
        requested = round(n ** (1.0 + sched.trees_exponent))
        cfg = sched.config(row["depth"])
    if requested is not None and cfg.trees < requested:
        cap = {"n": n, "depth": cfg.depth, "requested_trees": requested, "trees": cfg.trees}
    return row, time.perf_counter() - t0, cap


def rate_experiment(truth: HolderTruth, kind: str, n_list, replicates: int = 5, seed: int = 0,
                    adaptive: bool = False, settings: RateSettings | None = None) -> RateResult:
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError(f"n list must be increasing with >= 2 values, got {n_list}")
    if replicates < 1:
        raise ConfigurationError(f"need at least one replicate, got {replicates}")
    settings = settings or RateSettings()
    jobs = [(truth, kind, adaptive, n, r, seed, settings) for n in n_list for r in range(replicates)]
    workers = worker_count(len(jobs))
    if workers == 1:
        out = [_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_cell, jobs))
    rows, caps = [], []
    for row, wall, cap in out:
        row["wall_time"] = wall
        rows.append(row)
        if cap and cap not in caps:
            caps.append(cap)
    slope, intercept, se = fit_slope(rows)
    return RateResult(truth.alpha, kind, adaptive, rows, slope, se, intercept,
                      -truth.alpha / (2.0 * truth.alpha + 1.0), caps)


def fit_slope(rows) -> tuple[float, float, float]:
    x = np.log([r["n"] for r in rows])
    y = np.log([max(r["hellinger"], 1e-300) for r in rows])
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.stderr)


def periodic_basis(depth: int, m: int, x) -> np.ndarray:
    """Matrix of the 1-periodic B-splines ``S_i`` at ``x``, one column per ``i``."""
    n = 2**depth
    index, weight = spline_design(depth, m, n, x)
    a = np.zeros((len(x), n))
    np.add.at(a, (np.repeat(np.arange(len(x)), m + 1), index.ravel()), n * weight.ravel())
    return a


def spline_approx_oracle(truth, m: int, depth: int, oversample: int = 6):
    """Least-squares periodic-spline fit of ``truth`` on the interior.

    Returns the coefficients (zero for basis functions that vanish on the
    interior and were dropped) and the sup error over the interior, measured
    on a grid four times finer than the fitting points plus the truth's own
    breakpoints.
    """
    n = 2**depth
    lo, hi = m / n, 1.0 - m / n
    if not hi > lo:
        raise ConfigurationError(f"depth {depth} leaves no interior for m={m}")
    pts = 2 ** (depth + oversample)
    x = lo + (np.arange(pts) + 0.5) * (hi - lo) / pts
    a = periodic_basis(depth, m, x)
    live = np.flatnonzero(np.any(a != 0.0, axis=0))
    sol, _, rank, _ = np.linalg.lstsq(a[:, live], truth.evaluate(x), rcond=None)
    if rank < len(live):
        raise NumericError(f"rank-deficient spline design: rank {rank} < {len(live)}")
    coef = np.zeros(n)
    coef[live] = sol
    bp = np.asarray(getattr(truth, "breakpoints", lambda: np.empty(0))())
    xe = np.concatenate([np.linspace(lo, hi, 4 * pts, endpoint=False), bp[(bp >= lo) & (bp < hi)]])
    err = float(np.max(np.abs(periodic_basis(depth, m, xe) @ coef - truth.evaluate(xe))))
    return coef, err


def approximation_slope(truth, m: int, depths) -> tuple[float, list]:
    errs = [spline_approx_oracle(truth, m, L)[1] for L in depths]
    fit = stats.linregress(np.asarray(depths, float), np.log2(errs))
    return float(fit.slope), errs

