"""DPA, CPA and SPT prior samplers and the adaptive depth schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import chebyshev as C

from . import quadrature
from .aggregate import (
    BoundarySequence,
    GridDensity,
    SplineDensity,
    aggregate_continuous_eval,
    aggregate_discrete,
    build_boundary_sequence,
    decode_boundary,
    normalize_density,
)
from .dyadic import TptParams, sample_tpt
from .errors import ConfigurationError, DegenerateDensityError
from .kernel import KernelTable

KINDS = ("dpa", "cpa", "spt")
VARIANTS = {"dpa": "DPA-Thm2", "cpa": "CPA-Thm3", "spt": "SPT-Thm4"}

# fine-grid and tree caps applied at desk scale
MAX_GRID_CELLS = 2**26
DEFAULT_TREES_CAP = 2**13


def order_fits(kind: str, m: int, depth: int) -> bool:
    if kind == "spt":
        return m == 0 or 2**depth > 2 * m + 2
    return 2 ** (depth - 1) > m


def largest_order(kind: str, depth: int) -> int:
    if kind == "spt":
        return max(0, (2**depth - 3) // 2)
    return 2 ** (depth - 1) - 1


@dataclass
class PriorConfig:
    kind: str
    order: int
    depth: int
    tpt: TptParams | None = None
    trees: int | None = None
    bound: float = math.inf
    tau: float | None = None
    trees_exponent: float = 0.0
    adaptive: bool = False

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown prior kind {self.kind!r}")
        if self.order < 0:
            raise ConfigurationError(f"order must be >= 0, got {self.order}")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if not order_fits(self.kind, self.order, self.depth):
            need = "2^L > 2m+2" if self.kind == "spt" else "2^(L-1) > m"
            raise ConfigurationError(
                f"{self.kind.upper()} with m={self.order}, L={self.depth} violates {need}"
            )
        if self.tpt is None:
            self.tpt = TptParams.constant(self.depth)
        elif self.tpt.depth != self.depth:
            self.tpt = self.tpt.with_depth(self.depth)
        if self.kind == "spt":
            if self.tau is None or not self.tau > 0:
                raise ConfigurationError(f"SPT needs a floor tau > 0, got {self.tau}")
            if self.trees is not None:
                raise ConfigurationError("the number of trees only applies to DPA")
        else:
            if self.tau is not None:
                raise ConfigurationError("tau only applies to SPT")
            if not self.bound > 0:
                raise ConfigurationError(f"coefficient bound U must be positive, got {self.bound}")
        if self.kind == "dpa":
            if self.trees is None:
                self.trees = 1
            if self.trees < 1:
                raise ConfigurationError(f"number of trees must be >= 1, got {self.trees}")
        elif self.kind == "cpa" and self.trees is not None:
            raise ConfigurationError("the number of trees only applies to DPA")

    def with_depth(self, depth: int, order: int) -> "PriorConfig":
        return replace(self, depth=depth, order=order, tpt=self.tpt.with_depth(depth))


def xi(l: int, n: int) -> int:
    """Aggregation order attached to depth ``l``, natural log inside."""
    v = 0.5 * (math.log2(n / math.log(n)) / l - 1.0)
    return max(0, math.floor(v))


def cutoff_depth(n: int, alpha: float) -> int:
    """Nearest integer to ``log2((n / log n)^(1 / (2 alpha + 1)))``, halves up."""
    x = math.log2(n / math.log(n)) / (2.0 * alpha + 1.0)
    return max(0, math.floor(x + 0.5))


def depth_log_weight(l: int, variant: str) -> float:
    if l < 1:
        raise ConfigurationError(f"depth must be >= 1, got {l}")
    if variant in ("DPA-Thm2", "CPA-Thm3"):
        return -l * 2.0**l * math.log(2.0)
    if variant == "SPT-Thm4":
        return -(l**1.5) * 2.0**l * math.log(2.0)
    raise ConfigurationError(f"unknown schedule variant {variant!r}")


@dataclass
class AdaptiveSchedule:
    """Depth prior and per-depth conditional configuration.

    ``base`` supplies everything the hierarchy does not fix (Beta
    parameters, trees cap).  The conditional order at depth ``l`` is
    ``xi(l, n)``, lowered when needed so the depth can carry it.
    """

    variant: str
    n: int
    max_depth: int
    base: PriorConfig | None = None
    trees_exponent: float = 0.0
    trees_cap: int = DEFAULT_TREES_CAP

    def __post_init__(self):
        if self.variant not in VARIANTS.values():
            raise ConfigurationError(f"unknown schedule variant {self.variant!r}")
        if self.n < 3:
            raise ConfigurationError(f"adaptive schedules need n >= 3, got {self.n}")
        if self.max_depth < 1:
            raise ConfigurationError(f"max_depth must be >= 1, got {self.max_depth}")

    @property
    def kind(self) -> str:
        return self.variant.split("-")[0].lower()

    def log_weight(self, l: int) -> float:
        return depth_log_weight(l, self.variant)

    def weights(self) -> np.ndarray:
        """Depth prior normalized over ``1..max_depth``."""
        lw = np.array([self.log_weight(l) for l in range(1, self.max_depth + 1)])
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def order(self, l: int) -> int:
        return min(xi(l, self.n), largest_order(self.kind, l))

    def config(self, l: int) -> PriorConfig:
        m = self.order(l)
        kind = self.kind
        tpt = self.base.tpt.with_depth(l) if self.base is not None else TptParams.constant(l)
        if kind == "spt":
            return PriorConfig("spt", m, l, tpt, tau=1.0 / math.sqrt(self.n), adaptive=True)
        bound = math.log(self.n)
        if kind == "cpa":
            return PriorConfig("cpa", m, l, tpt, bound=bound, adaptive=True)
        q = effective_trees(round(self.n ** (1.0 + self.trees_exponent)), l, self.trees_cap)
        return PriorConfig(
            "dpa", m, l, tpt, trees=q, bound=bound,
            trees_exponent=self.trees_exponent, adaptive=True,
        )

    def sample_depth(self, rng: np.random.Generator) -> int:
        return int(rng.choice(np.arange(1, self.max_depth + 1), p=self.weights()))


def effective_trees(q: int, depth: int, cap: int | None = DEFAULT_TREES_CAP) -> int:
    """Trees actually used: at most ``cap`` and at most ``2^26`` fine cells."""
    q = max(1, int(q))
    if cap is not None:
        q = min(q, cap)
    return max(1, min(q, MAX_GRID_CELLS // 2**depth))


def spt_map(theta, m: int, tau: float, table: KernelTable | None = None) -> SplineDensity:
    """The SD map: periodic aggregation, polynomial edge pieces, floor, normalization."""
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    depth = int(round(math.log2(n)))
    if not order_fits("spt", m, depth):
        raise ConfigurationError(f"SPT with m={m}, L={depth} violates 2^L > 2m+2")
    if not tau > 0:
        raise ConfigurationError(f"SPT needs tau > 0, got {tau}")
    seq = BoundarySequence.periodic(theta, depth, m, height=float(n))
    h = 1.0 / n
    if m == 0:
        z = 1.0 + tau  # the step function already integrates to one
        return SplineDensity(seq, tau=tau, normalizer=z)

    def piece(a):
        return C.chebinterpolate(
            lambda t: aggregate_continuous_eval(seq, a + 0.5 * (t + 1.0) * h, table), m
        )

    p1 = piece(m * h)
    p2 = piece(1.0 - (m + 1) * h)
    # the interior spline has nonnegative coefficients, so no clipping is needed there
    knots = np.arange(m, n - m + 1) * h
    npts = max(3, m // 2 + 2)
    interior = quadrature.integrate(lambda x: aggregate_continuous_eval(seq, x, table), knots, npts)

    def left(x):
        return C.chebval(2.0 * (x - m * h) / h - 1.0, p1)

    def right(x):
        return C.chebval(2.0 * (x - (1.0 - (m + 1) * h)) / h - 1.0, p2)

    panels = 64 * m
    edges = (
        quadrature.positive_part_integral(left, 0.0, m * h, panels, 5)
        + quadrature.positive_part_integral(right, 1.0 - m * h, 1.0, panels, 5)
    )
    z = interior + edges + tau
    if not z > 0:
        raise DegenerateDensityError(f"SPT normalizer {z} is not positive")
    return SplineDensity(seq, p1, p2, tau, z)


def density_from_theta(config: PriorConfig, theta, fractions=None,
                       table: KernelTable | None = None):
    """Deterministic part of each prior, given Theta and the edge uniforms."""
    m = config.order
    if config.kind == "spt":
        return spt_map(theta, m, config.tau, table)
    fr = np.zeros(m) if fractions is None else fractions
    seq = decode_boundary(theta, m, config.bound, fr, table)
    if config.kind == "cpa":
        return SplineDensity(seq)
    return normalize_density(aggregate_discrete(seq, config.trees))


def sample_dpa(config: PriorConfig, rng: np.random.Generator,
               table: KernelTable | None = None) -> GridDensity:
    draw = sample_tpt(config.tpt, rng)
    seq = build_boundary_sequence(draw.theta, config.order, config.bound, rng, table)
    return normalize_density(aggregate_discrete(seq, config.trees))


def sample_cpa(config: PriorConfig, rng: np.random.Generator,
               table: KernelTable | None = None) -> SplineDensity:
    draw = sample_tpt(config.tpt, rng)
    return SplineDensity(build_boundary_sequence(draw.theta, config.order, config.bound, rng, table))


def sample_spt(config: PriorConfig, rng: np.random.Generator,
               table: KernelTable | None = None) -> SplineDensity:
    draw = sample_tpt(config.tpt, rng)
    return spt_map(draw.theta, config.order, config.tau, table)


SAMPLERS = {"dpa": sample_dpa, "cpa": sample_cpa, "spt": sample_spt}


def sample_prior(config: PriorConfig, rng: np.random.Generator, table: KernelTable | None = None):
    return SAMPLERS[config.kind](config, rng, table)


def sample_adaptive(schedule: AdaptiveSchedule, rng: np.random.Generator,
                    table: KernelTable | None = None):
    """Joint draw: depth from the depth prior, then the conditional prior."""
    l = schedule.sample_depth(rng)
    return l, sample_prior(schedule.config(l), rng, table)
