"""Acceptance criteria 1-9, one pass/fail line each.

Every test prints its line immediately and records it for the summary
printed at the end of the pytest run.
"""

import math
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from polya_forest.aggregate import aggregate_discrete, integral_unit_interval, normalize_density
from polya_forest.cli import main
from polya_forest.dyadic import TptParams, sample_tpt, strict_floor
from polya_forest.experiments import RateSettings, holder_density, rate_experiment
from polya_forest.experiments.lemmas import (
    check_discretization,
    check_hellinger_coefficients,
    check_polynomial_norms,
    check_spt_hellinger,
)
from polya_forest.experiments.rates import approximation_slope
from polya_forest.kernel import kernel_eval, omega
from polya_forest.posterior import Dataset, Posterior, mcmc_step, run_chain
from polya_forest.priors import AdaptiveSchedule, PriorConfig, sample_cpa, sample_dpa
from polya_forest.quadrature import integrate
from polya_forest.rng import stream


def report(number, ok, detail, seconds):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_kernel_identities():
    t0 = time.perf_counter()
    worst = {"support": 0.0, "symmetry": 0.0, "integral": 0.0, "unity": 0.0}
    exact = True
    r = np.random.default_rng(1)
    for m in range(1, 13):
        x = np.linspace(-1.0, m + 1.0, 10_000)
        worst["support"] = max(worst["support"], np.max(np.abs(kernel_eval(m, x)[(x < 0) | (x > m)]), initial=0))
        t = r.uniform(0, m, 2000)
        interior = (t > 0) & (t < m)
        worst["symmetry"] = max(worst["symmetry"], np.max(np.abs(kernel_eval(m, t[interior]) - kernel_eval(m, m - t[interior]))))
        knots = np.arange(m + 1, dtype=float)
        worst["integral"] = max(worst["integral"], abs(integrate(lambda s, m=m: kernel_eval(m, s), knots, m // 2 + 2) - 1.0))
        if m <= 9:
            for L in range(0, 11):
                u = r.random(200) * 2.0**L
                j = np.floor(u)[:, None] - np.arange(-1, m + 1)[None, :]
                s = kernel_eval(m, (u[:, None] - j).ravel()).reshape(j.shape).sum(axis=1)
                worst["unity"] = max(worst["unity"], np.max(np.abs(s - 1.0)))
    for m in range(0, 12):
        exact &= omega(m, 1) == Fraction(1, math.factorial(m + 1))
        exact &= all(omega(m, l) + omega(m, m + 1 - l) == 1 for l in range(m + 2))
    dt = time.perf_counter() - t0
    ok = (worst["support"] == 0 and worst["symmetry"] <= 1e-12 and worst["integral"] <= 1e-10
          and worst["unity"] <= 1e-10 and exact and dt < 10)
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f", omega exact={exact}"
    report(1, ok, detail, dt)


def test_criterion_2_density_integral():
    t0 = time.perf_counter()
    r = stream(2, "acceptance/density-integral")
    combos = [(L, m) for L in range(3, 9) for m in range(0, 5) if 2 ** (L - 1) > m]
    cpa_worst = 0.0
    for k in range(1000):
        L, m = combos[k % len(combos)]
        d = sample_cpa(PriorConfig("cpa", m, L, TptParams.constant(L, 0.5 + k % 4)), r)
        cpa_worst = max(cpa_worst, abs(integral_unit_interval(d.sequence) - 1.0))
    dpa_ok, dpa_worst_ratio, dpa_norm = True, 0.0, 0.0
    for k in range(200):
        L, m = combos[k % len(combos)]
        q = (64, 256, 1024)[k % 3]
        theta = sample_tpt(TptParams.constant(L, 1.0), r).theta
        from polya_forest.aggregate import build_boundary_sequence
        seq = build_boundary_sequence(theta, m, math.inf, r)
        raw = aggregate_discrete(seq, q)
        b = 2 ** (L + 1) * float(seq.base.max()) * m / q
        gap = abs(raw.integral() - 1.0)
        dpa_ok &= gap <= b + 1e-12
        if b > 0:
            dpa_worst_ratio = max(dpa_worst_ratio, gap / b)
        dpa_norm = max(dpa_norm, abs(normalize_density(raw).integral() - 1.0))
    dt = time.perf_counter() - t0
    ok = cpa_worst <= 1e-12 and dpa_ok and dpa_norm <= 1e-12 and dt < 60
    report(2, ok, f"cpa max |int-1|={cpa_worst:.2e} (1000 draws), dpa normalized max "
                  f"|int-1|={dpa_norm:.2e}, pre-normalization gap/bound max={dpa_worst_ratio:.3f}", dt)


def test_criterion_3_discretization():
    t0 = time.perf_counter()
    rep = check_discretization(3, 200)
    lo, hi = rep.extra["decay_ratio_range"]
    dt = time.perf_counter() - t0
    ok = rep.ok and rep.violations == 0 and 0.4 <= lo and hi <= 0.6
    report(3, ok, f"{rep.trials} checks over 200 draws, violations={rep.violations}, "
                  f"max gap/bound={rep.max_ratio:.3f}, decay ratio in [{lo:.4f}, {hi:.4f}]", dt)


def test_criterion_4_hellinger_bounds():
    t0 = time.perf_counter()
    cpa = check_hellinger_coefficients(4, 100)
    spt = check_spt_hellinger(4, 100)
    dt = time.perf_counter() - t0
    ok = cpa.ok and spt.ok and cpa.trials == spt.trials == 100
    report(4, ok, f"coefficient bound violations={cpa.violations} (max ratio {cpa.max_ratio:.3f}), "
                  f"SPT bound violations={spt.violations} (max ratio {spt.max_ratio:.3g})", dt)


def test_criterion_5_polynomial_norms():
    t0 = time.perf_counter()
    rep = check_polynomial_norms(5, 1000)
    dt = time.perf_counter() - t0
    report(5, rep.ok, f"1000 polynomials ({rep.trials} inequality checks), "
                      f"violations={rep.violations}, max ratio {rep.max_ratio:.3g}", dt)


def test_criterion_6_spline_approximation():
    t0 = time.perf_counter()
    slopes = {}
    for alpha in (0.5, 1.0, 1.5):
        # a cusp on a dyadic knot would be reproduced exactly by piecewise-linear splines
        truth = holder_density(alpha, center=1 / 3)
        slopes[alpha] = approximation_slope(truth, strict_floor(alpha) + 1, range(4, 10))[0]
    dt = time.perf_counter() - t0
    ok = all(abs(s + a) <= 0.15 for a, s in slopes.items()) and dt < 300
    report(6, ok, ", ".join(f"alpha={a}: slope {s:.4f}" for a, s in slopes.items()), dt)


def test_criterion_7_mcmc_correctness():
    t0 = time.perf_counter()
    x = stream(7, "acceptance/mcmc-data").beta(2.0, 3.0, 40)
    post = Posterior(Dataset(x), PriorConfig("cpa", 0, 1))
    rng = stream(7, "acceptance/mcmc")
    st = post.initial_state()
    burn, sweeps = 2000, 200_000
    ys = np.empty(sweeps)
    for t in range(burn + sweeps):
        st = mcmc_step(st, post, rng, (t + 1) ** -0.6 if t < burn else None)
        if t >= burn:
            ys[t - burn] = st.logits[0]
    ys = 1.0 / (1.0 + np.exp(-ys))
    bins, fine = 20, 500
    y = (np.arange(bins * fine) + 0.5) / (bins * fine)
    n0 = int(np.sum(x < 0.5))
    logp = n0 * np.log(2 * y) + (len(x) - n0) * np.log(2 * (1 - y))
    p = np.exp(logp - logp.max())
    exact = p.reshape(bins, fine).sum(axis=1) / p.sum()
    emp = np.histogram(ys, np.linspace(0, 1, bins + 1))[0] / sweeps
    tv_post = 0.5 * np.abs(emp - exact).sum()

    tv_depth = {}
    for variant in ("DPA-Thm2", "SPT-Thm4"):
        sched = AdaptiveSchedule(variant, 1000, 3)
        trace, _ = run_chain(Dataset([]), schedule=sched, iters=100_000, burnin=0, seed=7,
                             record_density=False)
        hist = np.bincount(trace.depth, minlength=4)[1:] / 100_000
        tv_depth[variant] = 0.5 * np.abs(hist - sched.weights()).sum()
    dt = time.perf_counter() - t0
    ok = tv_post <= 0.02 and all(v <= 0.02 for v in tv_depth.values())
    report(7, ok, f"L=1 posterior TV={tv_post:.4f}, prior-only depth TV "
                  + ", ".join(f"{k}={v:.4f}" for k, v in tv_depth.items()), dt)


def test_criterion_8_contraction():
    t0 = time.perf_counter()
    res = rate_experiment(holder_density(1.0), "dpa", [500, 2000, 8000], 5, 0, False,
                          RateSettings(trees_cap=2**13))
    med = res.medians()
    errs = [med[n] for n in sorted(med)]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    dt = time.perf_counter() - t0
    ok = decreasing and abs(res.slope + 1 / 3) <= 0.15 and dt < 1800
    report(8, ok, "median hellinger " + ", ".join(f"n={n}: {v:.4f}" for n, v in med.items())
           + f"; slope {res.slope:.4f} (se {res.slope_se:.4f}, target -0.3333)", dt)


REPRO_COMMANDS = [
    ["kernel-table", "--m", "4", "--resolution", "16", "--out", "kernel.csv"],
    ["sample-prior", "--prior", "dpa", "--m", "2", "--depth", "4", "--trees", "64",
     "--u-bound", "6", "--seed", "9", "--out", "dpa.csv"],
    ["sample-prior", "--prior", "cpa", "--m", "1", "--depth", "3", "--seed", "9", "--out", "cpa.csv"],
    ["sample-prior", "--prior", "spt", "--m", "1", "--depth", "3", "--tau", "0.1",
     "--seed", "9", "--out", "spt.csv"],
    ["metrics", "--f", "dpa.csv", "--g", "spt.csv", "--metric", "kl", "--out", "kl.json"],
    ["metrics", "--f", "dpa.csv", "--g", "cpa.csv", "--metric", "hellinger", "--out", "h.json"],
    ["fit", "--data", "data.csv", "--prior", "dpa", "--m", "1", "--depth", "3", "--iters", "150",
     "--burnin", "50", "--seed", "9", "--out", "fit.json", "--density-out", "fit.csv"],
    ["fit", "--data", "data.csv", "--prior", "spt", "--adaptive", "--iters", "100",
     "--burnin", "30", "--seed", "9", "--out", "fit_adaptive.json"],
    ["rate-experiment", "--alpha", "1", "--prior", "cpa", "--n", "100,300", "--replicates", "2",
     "--iters", "60", "--burnin", "20", "--grid", "64", "--seed", "9", "--out", "rates.csv"],
    ["verify-lemmas", "--trials", "3", "--seed", "9", "--out", "lemmas.json"],
]

VOLATILE = ("started", "finished", "stage_times")


def _run_all(directory: Path):
    x = stream(9, "acceptance/repro-data").random(200)
    (directory / "data.csv").write_text("x\n" + "".join(f"{v!r}\n" for v in x.tolist()))
    cwd = os.getcwd()
    os.chdir(directory)
    try:
        return [main(list(argv)) for argv in REPRO_COMMANDS]
    finally:
        os.chdir(cwd)


def test_criterion_9_reproducibility(tmp_path, monkeypatch):
    import json

    monkeypatch.setenv("POLYA_FOREST_THREADS", "1")
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    codes = _run_all(a) + _run_all(b)
    outputs = sorted(p.name for p in a.iterdir() if not p.name.endswith(".manifest.json"))
    same = [p for p in outputs if (a / p).read_bytes() == (b / p).read_bytes()]
    manifests_match = True
    for p in a.glob("*.manifest.json"):
        ma, mb = (json.loads((d / p.name).read_text()) for d in (a, b))
        for key in VOLATILE:
            ma.pop(key), mb.pop(key)
        manifests_match &= ma == mb
    dt = time.perf_counter() - t0
    ok = all(c == 0 for c in codes) and len(same) == len(outputs) and manifests_match
    report(9, ok, f"{len(same)}/{len(outputs)} outputs byte-identical across "
                  f"{len(REPRO_COMMANDS)} commands; manifests equal up to timestamps: {manifests_match}", dt)
