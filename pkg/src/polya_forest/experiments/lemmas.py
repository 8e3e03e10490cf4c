"""Randomized checks of the inequalities the prior constructions rely on.

Each check draws instances from its own seeded stream, evaluates both
sides of an inequality (or an identity) and records the worst ratio and
the smallest slack.  A check fails when any instance violates its bound
by more than ``ABS_TOL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

from .. import quadrature
from ..aggregate import (
    SplineDensity,
    aggregate_continuous_eval,
    aggregate_discrete,
    decode_boundary,
    integral_unit_interval,
    normalization_sum,
    normalize_density,
)
from ..dyadic import TptParams, sample_split_logits, theta_from_logits
from ..errors import PropertyViolation
from ..kernel import KernelTable, default_table
from ..metrics import distance
from ..priors import spt_map
from ..rng import stream

ABS_TOL = 1e-9
TREE_SIZES = tuple(2**k for k in range(8, 13))
DEGREES = tuple(range(1, 7))
WINDOWS = (0.25, 0.5, 0.75)
GRID_SUP_POINTS = 1024


@dataclass
class LemmaReport:
    name: str
    trials: int = 0
    violations: int = 0
    max_ratio: float = 0.0
    min_slack: float = math.inf
    first_violation: dict | None = None
    extra: dict = field(default_factory=dict)

    def record(self, lhs: float, rhs: float, instance: dict, tol: float = ABS_TOL) -> None:
        self.trials += 1
        slack = rhs - lhs
        self.min_slack = min(self.min_slack, slack)
        if rhs > 0:
            self.max_ratio = max(self.max_ratio, lhs / rhs)
        elif lhs > 0:
            self.max_ratio = math.inf
        if not slack >= -tol:
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = dict(instance, lhs=lhs, rhs=rhs)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.trials > 0

    def to_dict(self) -> dict:
        out = {
            "trials": self.trials,
            "violations": self.violations,
            "max_ratio": self.max_ratio,
            "min_slack": self.min_slack,
            "ok": self.ok,
        }
        if self.first_violation is not None:
            out["first_violation"] = self.first_violation
        out.update(self.extra)
        return out


@dataclass
class _Instance:
    depth: int
    order: int
    a: float
    bound: float
    logits: np.ndarray
    fractions: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return theta_from_logits(self.logits)

    def sequence(self, table=None):
        return decode_boundary(self.theta, self.order, self.bound, self.fractions, table)

    def describe(self, **kw) -> dict:
        return dict(depth=self.depth, order=self.order, a=self.a, bound=self.bound, **kw)


def _draw(rng, depths, orders, fits=lambda m, L: 2 ** (L - 1) > m) -> _Instance:
    depth = int(rng.choice(depths))
    m = int(rng.choice([k for k in orders if fits(k, depth)]))
    a = float(np.exp(rng.uniform(math.log(0.3), math.log(3.0))))
    u = float(rng.uniform(1.0, 6.0))
    z = sample_split_logits(TptParams.constant(depth, a).node_params(), rng)
    return _Instance(depth, m, a, u, z, rng.random(m))


def _partner(rng, inst: _Instance) -> _Instance:
    """An independent redraw half the time, otherwise a perturbation of random size."""
    if rng.random() < 0.5:
        z = sample_split_logits(TptParams.constant(inst.depth, inst.a).node_params(), rng)
        fr = rng.random(inst.order)
    else:
        scale = 10.0 ** rng.uniform(-5.0, 0.0)
        z = inst.logits + scale * rng.standard_normal(inst.logits.shape)
        fr = np.clip(inst.fractions + scale * rng.standard_normal(inst.order), 0.0, 1.0)
    return _Instance(inst.depth, inst.order, inst.a, inst.bound, z, fr)


def discretization_gap(seq, q: int, table=None) -> float:
    """Sup over [0, 1) of the gap between discrete and continuous aggregation.

    The continuous limit is a polynomial on every fine cell (its knots lie
    on the fine grid), so for ``m <= 1`` the cell end points give the exact
    sup; cell midpoints are added for higher orders.
    """
    disc = aggregate_discrete(seq, q).values
    n = len(disc)
    ends = aggregate_continuous_eval(seq, np.arange(n + 1) / n, table)
    gap = max(np.max(np.abs(ends[:-1] - disc)), np.max(np.abs(ends[1:] - disc)))
    if seq.order >= 2:
        mids = aggregate_continuous_eval(seq, (np.arange(n) + 0.5) / n, table)
        gap = max(gap, np.max(np.abs(mids - disc)))
    return float(gap)


def discretization_bound(seq, q: int) -> float:
    """``m l' (l s + 1) / q`` with ``l'`` the top height and ``l = 2^L + m`` breaks."""
    m = seq.order
    top = seq.height * float(np.max(seq.base))
    return m * top * ((seq.cells + m) / seq.cells + 1.0) / q


def check_discretization(seed: int, trials: int, table=None) -> LemmaReport:
    rep = LemmaReport("discretization")
    ratios = []
    for t in range(trials):
        rng = stream(seed, "lemma/discretization", t)
        inst = _draw(rng, (3, 4, 5), (1, 2, 3))
        seq = inst.sequence(table)
        gaps = []
        for q in TREE_SIZES:
            gap = discretization_gap(seq, q, table)
            gaps.append(gap)
            rep.record(gap, discretization_bound(seq, q), inst.describe(trial=t, q=q))
        g = np.asarray(gaps)
        if np.all(g > 0):
            ratios.extend((g[1:] / g[:-1]).tolist())
    if ratios:
        rep.extra["decay_ratio_mean"] = float(np.mean(ratios))
        rep.extra["decay_ratio_median"] = float(np.median(ratios))
        rep.extra["decay_ratio_range"] = [float(np.min(ratios)), float(np.max(ratios))]
    return rep


def check_hellinger_coefficients(seed: int, trials: int, table=None) -> LemmaReport:
    """CPA pairs: ``h <= (2^L + m)^(1/4) ||theta - zeta||_2^(1/2)``."""
    rep = LemmaReport("hellinger_coefficients")
    for t in range(trials):
        rng = stream(seed, "lemma/hellinger_coefficients", t)
        one = _draw(rng, (3, 4, 5), (0, 1, 2, 3))
        two = _partner(rng, one)
        s1, s2 = one.sequence(table), two.sequence(table)
        h = distance("hellinger", SplineDensity(s1), SplineDensity(s2))
        rhs = (2**one.depth + one.order) ** 0.25 * float(np.linalg.norm(s1.base - s2.base)) ** 0.5
        rep.record(h, rhs, one.describe(trial=t))
    return rep


def check_hellinger_coefficients_discrete(seed: int, trials: int, table=None) -> LemmaReport:
    """Normalized DPA pairs, with the extra discretization term."""
    rep = LemmaReport("hellinger_coefficients_discrete")
    for t in range(trials):
        rng = stream(seed, "lemma/hellinger_coefficients_discrete", t)
        one = _draw(rng, (3, 4), (0, 1, 2, 3))
        two = _partner(rng, one)
        s1, s2 = one.sequence(table), two.sequence(table)
        m, big = one.order, float(max(s1.base.max(), s2.base.max()))
        need = 2 ** (one.depth + 1) * m * big
        q = int(rng.choice(TREE_SIZES[:3]))
        while q <= need:
            q *= 2
        f = normalize_density(aggregate_discrete(s1, q))
        g = normalize_density(aggregate_discrete(s2, q))
        h = distance("hellinger", f, g)
        rhs = (3.0 * (2**one.depth + m)) ** 0.25 * float(np.linalg.norm(s1.base - s2.base)) ** 0.5
        rhs += 6.0**0.25 * math.sqrt(need / (q - need) * (1.0 + m * big))
        rep.record(h, rhs, one.describe(trial=t, q=q))
    return rep


def spt_hellinger_constant(m: int) -> float:
    return 2.0 * (1.0 + math.sqrt(1.0 + 2.0 * (m + 1) ** 3 * math.exp(math.sqrt(6.0 * (m + 1)) * m)))


def check_spt_hellinger(seed: int, trials: int, table=None) -> LemmaReport:
    """``h(SD g1, SD g2) <= C(m) tau^(-1/2) ||g1 - g2||_2^(1/2)``."""
    rep = LemmaReport("spt_hellinger")
    fits = lambda m, L: m == 0 or 2**L > 2 * m + 2  # noqa: E731
    for t in range(trials):
        rng = stream(seed, "lemma/spt_hellinger", t)
        one = _draw(rng, (3, 4, 5), (0, 1, 2, 3), fits)
        two = _partner(rng, one)
        tau = float(10.0 ** rng.uniform(-2.0, 0.0))
        f1 = spt_map(one.theta, one.order, tau, table)
        f2 = spt_map(two.theta, two.order, tau, table)
        h = distance("hellinger", f1, f2)
        g_gap = math.sqrt(2**one.depth * float(np.sum((one.theta - two.theta) ** 2)))
        rhs = spt_hellinger_constant(one.order) * tau**-0.5 * g_gap**0.5
        rep.record(h, rhs, one.describe(trial=t, tau=tau))
    return rep


def exact_sup(p: Polynomial, a: float, b: float) -> float:
    """Max of ``|p|`` on [a, b] from the end points and the critical points."""
    pts = [a, b]
    d = p.deriv()
    if d.degree() >= 1:
        r = d.roots()
        r = r[np.abs(r.imag) < 1e-12].real
        pts.extend(r[(r > a) & (r < b)].tolist())
    return float(np.max(np.abs(p(np.asarray(pts)))))


def abs_integral(p: Polynomial, a: float, b: float) -> float:
    r = p.roots()
    r = r[np.abs(r.imag) < 1e-12].real if p.degree() >= 1 else np.empty(0)
    edges = quadrature.merge_breakpoints(r, lo=a, hi=b)
    npts = max(2, (p.degree() + 2) // 2 + 1)
    return quadrature.integrate(lambda x: np.abs(p(x)), edges, npts)


def check_polynomial_norms(seed: int, trials: int, table=None) -> LemmaReport:
    """Sup and L1 norms on [0, 1] against the norms on [0, s] and [1 - s, 1].

    The sup over [0, 1] is the grid maximum on 1024 points (a lower bound of
    the true sup) while the windowed sup is exact, keeping the check sound.
    """
    rep = LemmaReport("polynomial_norms")
    grid = np.linspace(0.0, 1.0, GRID_SUP_POINTS)
    for t in range(trials):
        rng = stream(seed, "lemma/polynomial_norms", t)
        deg = int(rng.choice(DEGREES))
        s = float(rng.choice(WINDOWS))
        p = Polynomial(rng.uniform(-1.0, 1.0, deg + 1))
        growth = math.exp(math.sqrt(6.0 / s) * deg)
        full_sup = float(np.max(np.abs(p(grid))))
        full_l1 = abs_integral(p, 0.0, 1.0)
        inst = {"trial": t, "degree": deg, "s": s, "coefficients": p.coef.tolist()}
        for a, b in ((0.0, s), (1.0 - s, 1.0)):
            rep.record(full_sup, growth * exact_sup(p, a, b), dict(inst, window=[a, b], norm="sup"))
            rhs = growth * 2.0 / s * (deg + 1) ** 2 * abs_integral(p, a, b)
            rep.record(full_l1, rhs, dict(inst, window=[a, b], norm="l1"))
    return rep


def check_density_integral(seed: int, trials: int, table: KernelTable | None = None) -> LemmaReport:
    """Boundary-corrected draws integrate to one.

    The reference integral is Gauss-Legendre on every knot cell, exact for
    the piecewise polynomial and independent of the omega table; the
    closed-form integral and the coefficient constraint use the table.
    """
    rep = LemmaReport("density_integral")
    for t in range(trials):
        rng = stream(seed, "lemma/density_integral", t)
        inst = _draw(rng, (3, 4, 5, 6), (0, 1, 2, 3, 4))
        seq = inst.sequence(table)
        knots = np.arange(seq.cells + 1) / seq.cells
        npts = max(2, inst.order // 2 + 2)
        ref = quadrature.integrate(lambda x: aggregate_continuous_eval(seq, x, table), knots, npts)
        worst = max(abs(ref - 1.0), abs(integral_unit_interval(seq, table) - 1.0),
                    abs(normalization_sum(seq, table) - 1.0))
        rep.record(worst, 1e-12, inst.describe(trial=t), tol=0.0)
    return rep


def check_omega_identities(table: KernelTable | None = None) -> LemmaReport:
    table = table or default_table()
    rep = LemmaReport("omega_identities")
    for m in range(0, table.max_order):
        w = [table.omega(m, l) for l in range(m + 2)]
        gaps = [abs(w[0]), abs(w[-1] - 1), abs(w[1] - Fraction(1, math.factorial(m + 1)))]
        gaps += [abs(w[l] + w[m + 1 - l] - 1) for l in range(m + 2)]
        gaps += [max(Fraction(0), w[l] - w[l + 1]) for l in range(m + 1)]
        rep.record(float(max(gaps)), 0.0, {"order": m}, tol=0.0)
    return rep


CHECKS = {
    "discretization": check_discretization,
    "hellinger_coefficients": check_hellinger_coefficients,
    "hellinger_coefficients_discrete": check_hellinger_coefficients_discrete,
    "spt_hellinger": check_spt_hellinger,
    "polynomial_norms": check_polynomial_norms,
    "density_integral": check_density_integral,
}


def verify_lemmas(seed: int = 0, trials: int = 100, table: KernelTable | None = None,
                  only=None) -> dict:
    """Run every check; ``report["ok"]`` is False if any inequality failed."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    names = list(CHECKS) if only is None else list(only)
    reports = [check_omega_identities(table)]
    reports += [CHECKS[name](seed, trials, table) for name in names]
    return {
        "seed": seed,
        "trials": trials,
        "ok": all(r.ok for r in reports),
        "lemmas": {r.name: r.to_dict() for r in reports},
    }


def raise_on_failure(report: dict) -> None:
    bad = [k for k, v in report["lemmas"].items() if not v["ok"]]
    if bad:
        first = report["lemmas"][bad[0]].get("first_violation")
        raise PropertyViolation(
            f"inequality violated in {', '.join(bad)} (seed {report['seed']}); first instance: {first}"
        )
