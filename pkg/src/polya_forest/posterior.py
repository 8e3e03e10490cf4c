"""Likelihoods, Metropolis-within-Gibbs sweeps and reversible-jump depth moves.

The chain lives on unconstrained coordinates: the logits of the left split
fractions and the logits of the edge fractions ``w_i``, where the edge
coefficient is ``v_i = lo + w_i * (hi - lo)`` on its current legal interval.
The target density on these coordinates includes the logistic Jacobians, so
each split contributes ``a (log Y + log(1 - Y)) - log B(a, a)`` and each edge
fraction ``log w + log(1 - w)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import expit, log_expit, logit

from .aggregate import GridDensity, decode_boundary, spline_design
from .dyadic import sample_split_logits, theta_from_logits, tpt_log_prior_logit
from .errors import ConfigurationError, DataError
from .kernel import KernelTable, default_table
from .priors import (
    DEFAULT_TREES_CAP,
    AdaptiveSchedule,
    PriorConfig,
    density_from_theta,
    effective_trees,
)
from .rng import stream

log = logging.getLogger(__name__)

TARGET_ACCEPT = 0.44
LOW_ACCEPT = 0.05


@dataclass
class Dataset:
    observations: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.observations, dtype=float).ravel()
        bad = ~np.isfinite(x) | (x < 0.0) | (x >= 1.0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"observation {i} = {x[i]!r} is outside [0, 1)")
        self.observations = x

    @property
    def n(self) -> int:
        return len(self.observations)


def log_likelihood(density, data: Dataset) -> float:
    """Sum of log density values at the observations (``-inf`` if any is zero)."""
    if data.n == 0:
        return 0.0
    f = np.asarray(density.evaluate(data.observations), dtype=float)
    if np.any(~(f > 0.0)):
        return -math.inf
    return float(np.sum(np.log(f)))


def log_accept_probability(log_ratio: float) -> float:
    """Metropolis acceptance probability ``min(1, exp(log_ratio))``."""
    if math.isnan(log_ratio):
        return 0.0
    return 1.0 if log_ratio >= 0.0 else math.exp(log_ratio)


def _sum_uniform_pmf(m: int, q: int) -> np.ndarray:
    """Law of a sum of ``m`` independent uniforms on ``{0, ..., q-1}``."""
    p = np.ones(1)
    box = np.full(q, 1.0 / q)
    for _ in range(m):
        p = np.maximum(fftconvolve(p, box), 0.0) if q > 64 else np.convolve(p, box)
    return p / p.sum()


class Model:
    """Likelihood engine for one prior kind at one depth."""

    def __init__(self, config: PriorConfig, data: Dataset, table: KernelTable | None = None):
        self.config = config
        self.data = data
        self.table = table or default_table()
        self.depth = config.depth
        self.order = config.order
        self.n_splits = 2**self.depth - 1
        self.n_edge = self.order if config.kind in ("dpa", "cpa") else 0

    def decode(self, logits, edge_logits):
        theta = theta_from_logits(logits)
        fractions = expit(np.asarray(edge_logits, dtype=float))
        return theta, fractions

    def density(self, logits, edge_logits):
        theta, fractions = self.decode(logits, edge_logits)
        return density_from_theta(self.config, theta, fractions, self.table)

    def log_prior(self, logits, edge_logits) -> float:
        e = np.asarray(edge_logits, dtype=float)
        return tpt_log_prior_logit(self.config.tpt, logits) + float(
            np.sum(log_expit(e) + log_expit(-e))
        )

    def log_likelihood(self, logits, edge_logits) -> float:
        raise NotImplementedError


class _CoefficientModel(Model):
    """DPA and CPA: the density at each observation is linear in the coefficients."""

    def _base(self, logits, edge_logits):
        theta, fractions = self.decode(logits, edge_logits)
        try:
            return decode_boundary(theta, self.order, self.config.bound, fractions, self.table).base
        except ConfigurationError:
            return None

    def log_likelihood(self, logits, edge_logits) -> float:
        if self.data.n == 0:
            return 0.0
        base = self._base(logits, edge_logits)
        if base is None:
            return -math.inf
        vals = np.sum(base[self.index] * self.weight, axis=1)
        if np.any(~(vals > 0.0)):
            return -math.inf
        return float(np.sum(np.log(vals * self.scale)) - self.data.n * math.log(self.mass(base)))

    def mass(self, base) -> float:
        return 1.0


class CpaModel(_CoefficientModel):
    def __init__(self, config, data, table=None):
        super().__init__(config, data, table)
        period = 2**self.depth + self.order
        self.index, self.weight = spline_design(
            self.depth, self.order, period, data.observations, self.table
        )
        self.scale = float(2**self.depth)


class DpaModel(_CoefficientModel):
    """Exact fine-grid likelihood without materializing the grid.

    After ``m`` window passes the fine cell ``c`` holds
    ``sum_S P(S) g0[c + m q - S]``, where ``S`` is a sum of ``m`` uniforms on
    ``{0..q-1}`` and ``g0`` is the extended step function; grouping ``S`` by
    the coarse cell it lands in gives ``m + 2`` weights per observation.
    """

    def __init__(self, config, data, table=None):
        super().__init__(config, data, table)
        m, q, n = self.order, config.trees, 2**self.depth
        period = n + m
        pmf = _sum_uniform_pmf(m, q)
        cdf = np.concatenate([[0.0], np.cumsum(pmf)])

        def prob_le(s):
            # P(S <= s) for integer arrays s
            return cdf[np.clip(s + 1, 0, len(pmf))]

        fine = q * n
        c = np.minimum((data.observations * fine).astype(np.int64), fine - 1)
        r = np.arange(m + 2)
        k = (c // q)[:, None] - r[None, :]
        self.weight = prob_le(c[:, None] - k * q) - prob_le(c[:, None] - (k + 1) * q)
        self.index = np.mod(k, period)
        self.scale = float(n)
        self.mass_weights = self._mass_weights(pmf, m, q, n, period)

    @staticmethod
    def _mass_weights(pmf, m, q, n, period):
        # expected overlap of each coarse cell with the shifted kept window;
        # cells 0 .. n-m-1 always lie inside it
        fine = q * n
        cover = np.zeros(n + m)
        cover[m : n] = q
        s = np.arange(len(pmf))
        ks = np.concatenate([np.arange(-m, 0), np.arange(n - m, n)])
        lo = np.maximum((ks[:, None] + m) * q, m * q - s[None, :])
        hi = np.minimum((ks[:, None] + m + 1) * q, m * q + fine - s[None, :])
        cover[ks + m] = np.clip(hi - lo, 0, None) @ pmf
        w = np.zeros(period)
        np.add.at(w, np.mod(np.arange(-m, n), period), cover * n / fine)
        return w

    def mass(self, base) -> float:
        return float(self.mass_weights @ base)


class SptModel(Model):
    def log_likelihood(self, logits, edge_logits) -> float:
        if self.data.n == 0:
            return 0.0
        return log_likelihood(self.density(logits, edge_logits), self.data)


MODELS = {"dpa": DpaModel, "cpa": CpaModel, "spt": SptModel}


@dataclass
class ChainState:
    depth: int
    logits: np.ndarray
    edge_logits: np.ndarray
    log_lik: float
    log_prior: float
    step_sizes: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=lambda: {"split": 0, "edge": 0, "depth": 0})
    proposed: dict = field(default_factory=lambda: {"split": 0, "edge": 0, "depth": 0})
    rejected_nonfinite: int = 0

    def copy(self) -> "ChainState":
        return ChainState(
            self.depth, self.logits.copy(), self.edge_logits.copy(), self.log_lik,
            self.log_prior, {k: v.copy() for k, v in self.step_sizes.items()},
            dict(self.accepted), dict(self.proposed), self.rejected_nonfinite,
        )

    def steps(self) -> np.ndarray:
        return self.step_sizes[self.depth]


class Posterior:
    """Data, prior (fixed or adaptive) and a cache of per-depth models."""

    def __init__(self, data: Dataset, config: PriorConfig | None = None,
                 schedule: AdaptiveSchedule | None = None, table: KernelTable | None = None,
                 trees_cap: int | None = DEFAULT_TREES_CAP, depth_proposal: str = "nested",
                 initial_step: float = 0.5):
        if config is None and schedule is None:
            raise ConfigurationError("need a prior configuration or an adaptive schedule")
        if depth_proposal not in ("nested", "fresh"):
            raise ConfigurationError(f"unknown depth proposal {depth_proposal!r}")
        self.data = data
        self.config = config
        self.schedule = schedule
        self.table = table
        self.trees_cap = trees_cap
        self.depth_proposal = depth_proposal
        self.initial_step = initial_step
        self._models: dict[int, Model] = {}

    @property
    def adaptive(self) -> bool:
        return self.schedule is not None

    def config_at(self, depth: int) -> PriorConfig:
        if self.schedule is not None:
            return self.schedule.config(depth)
        if depth != self.config.depth:
            raise ConfigurationError(f"fixed-depth posterior has depth {self.config.depth}")
        cfg = self.config
        if cfg.kind == "dpa":
            q = effective_trees(cfg.trees, cfg.depth, self.trees_cap)
            if q != cfg.trees:
                cfg = replace(cfg, trees=q)
        return cfg

    def model(self, depth: int) -> Model:
        if depth not in self._models:
            cfg = self.config_at(depth)
            self._models[depth] = MODELS[cfg.kind](cfg, self.data, self.table)
        return self._models[depth]

    def log_weight(self, depth: int) -> float:
        return self.schedule.log_weight(depth) if self.schedule else 0.0

    def energy(self, depth, logits, edge_logits) -> tuple[float, float]:
        mod = self.model(depth)
        return mod.log_prior(logits, edge_logits), mod.log_likelihood(logits, edge_logits)

    def state(self, depth, logits, edge_logits, step_sizes=None) -> ChainState:
        lp, ll = self.energy(depth, logits, edge_logits)
        st = ChainState(depth, np.asarray(logits, float), np.asarray(edge_logits, float), ll, lp)
        if step_sizes:
            st.step_sizes.update(step_sizes)
        self.ensure_steps(st)
        return st

    def ensure_steps(self, state: ChainState) -> None:
        if state.depth not in state.step_sizes:
            mod = self.model(state.depth)
            state.step_sizes[state.depth] = np.full(mod.n_splits + mod.n_edge, self.initial_step)

    def initial_state(self, depth: int | None = None) -> ChainState:
        """Uniform start: all split and edge logits at zero."""
        if depth is None:
            depth = self.config.depth if self.config is not None else 1
        mod = self.model(depth)
        return self.state(depth, np.zeros(mod.n_splits), np.zeros(mod.n_edge))

    def recompute(self, state: ChainState) -> tuple[float, float]:
        return self.energy(state.depth, state.logits, state.edge_logits)


def mcmc_step(state: ChainState, post: Posterior, rng: np.random.Generator,
              adapt_rate: float | None = None) -> ChainState:
    """One sweep of single-coordinate Gaussian random-walk updates.

    With ``adapt_rate`` set (burn-in only) each coordinate's log step size
    moves by ``adapt_rate * (acceptance - 0.44)``.
    """
    st = state.copy()
    post.ensure_steps(st)
    mod = post.model(st.depth)
    steps = st.steps()
    coords = np.concatenate([st.logits, st.edge_logits])
    ns = mod.n_splits
    noise = rng.standard_normal(len(coords))
    unif = rng.random(len(coords))
    for k in range(len(coords)):
        block = "split" if k < ns else "edge"
        old = coords[k]
        coords[k] = old + steps[k] * noise[k]
        lp, ll = mod.log_prior(coords[:ns], coords[ns:]), mod.log_likelihood(coords[:ns], coords[ns:])
        delta = (lp + ll) - (st.log_prior + st.log_lik)
        st.proposed[block] += 1
        if not math.isfinite(lp + ll):
            st.rejected_nonfinite += 1
            acc = 0.0
        else:
            acc = log_accept_probability(delta)
        if unif[k] < acc:
            st.accepted[block] += 1
            st.log_prior, st.log_lik = lp, ll
        else:
            coords[k] = old
        if adapt_rate is not None and steps[k] > 0.0:
            steps[k] = math.exp(math.log(steps[k]) + adapt_rate * (acc - TARGET_ACCEPT))
    st.logits, st.edge_logits = coords[:ns].copy(), coords[ns:].copy()
    return st


def depth_move(state: ChainState, post: Posterior, rng: np.random.Generator) -> ChainState:
    """Reversible-jump proposal ``l -> l +/- 1`` with prior-drawn new coordinates.

    The nested proposal keeps the shared split levels and draws only the
    added level (and the edge fractions) from the prior; the fresh proposal
    redraws everything.  Either way the prior of the proposed coordinates
    cancels against its own proposal density and the acceptance ratio is
    ``w_{l'} L' / (w_l L)``.
    """
    if not post.adaptive:
        raise ConfigurationError("depth moves need an adaptive schedule")
    st = state.copy()
    st.proposed["depth"] += 1
    up = rng.random() < 0.5
    target = st.depth + (1 if up else -1)
    u = rng.random()
    if target < 1 or target > post.schedule.max_depth:
        return st
    new_cfg = post.config_at(target)
    new_mod = post.model(target)
    if post.depth_proposal == "fresh":
        logits = sample_split_logits(new_cfg.tpt.node_params(), rng)
    elif up:
        added = new_cfg.tpt.node_params()[st.logits.size :]
        logits = np.concatenate([st.logits, sample_split_logits(added, rng)])
    else:
        logits = st.logits[: new_mod.n_splits].copy()
    edge = logit(rng.random(new_mod.n_edge)) if new_mod.n_edge else np.empty(0)
    lp, ll = post.energy(target, logits, edge)
    log_r = post.log_weight(target) - post.log_weight(st.depth) + ll - st.log_lik
    if not math.isfinite(ll):
        st.rejected_nonfinite += 1
        return st
    if u < log_accept_probability(log_r):
        st.accepted["depth"] += 1
        st.depth, st.logits, st.edge_logits = target, logits, edge
        st.log_prior, st.log_lik = lp, ll
        post.ensure_steps(st)
    return st


@dataclass
class ChainTrace:
    log_lik: np.ndarray
    log_prior: np.ndarray
    depth: np.ndarray
    samples: np.ndarray
    sample_depth: np.ndarray


@dataclass
class PosteriorSummary:
    grid: int
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    depth_histogram: dict
    acceptance: dict
    ess: float
    warnings: list

    def mean_density(self) -> GridDensity:
        return GridDensity(self.mean)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "level": self.level,
            "mean": self.mean.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "depth_histogram": {str(k): v for k, v in sorted(self.depth_histogram.items())},
            "acceptance": self.acceptance,
            "ess": self.ess,
            "warnings": list(self.warnings),
        }


def effective_sample_size(x) -> float:
    """Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or not np.all(np.isfinite(x)):
        return float(n)
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    pairs = rho[: (n // 2) * 2].reshape(-1, 2).sum(axis=1)
    pos = np.flatnonzero(pairs <= 0.0)
    cut = int(pos[0]) if len(pos) else len(pairs)
    g = np.minimum.accumulate(pairs[:cut])
    tau = -1.0 + 2.0 * float(np.sum(g))
    return float(n / max(tau, 1.0 / n))


def cell_averages(density, grid: int) -> np.ndarray:
    return np.asarray(density.cell_averages(grid), dtype=float)


def run_chain(data: Dataset, config: PriorConfig | None = None,
              schedule: AdaptiveSchedule | None = None, iters: int = 2000, burnin: int = 500,
              seed: int = 0, grid: int = 256, thin: int = 1, level: float = 0.9,
              replicate: int = 0, record_density: bool = True, posterior: Posterior | None = None,
              **options):
    """Run one chain; returns ``(ChainTrace, PosteriorSummary)``."""
    if not iters > burnin >= 0:
        raise ConfigurationError(f"need iters > burnin >= 0, got iters={iters}, burnin={burnin}")
    if thin < 1:
        raise ConfigurationError(f"thin must be >= 1, got {thin}")
    post = posterior or Posterior(data, config, schedule, **options)
    rng = stream(seed, "chain", replicate)
    init_depth = None
    if schedule is not None:
        init_depth = config.depth if config is not None else 1
    st = post.initial_state(init_depth)
    ll, lp, dp = (np.empty(iters) for _ in range(3))
    samples, sample_depth = [], []
    frozen = None
    for t in range(iters):
        rate = (t + 1) ** -0.6 if t < burnin else None
        if t == burnin:
            # restart acceptance counts so reported rates describe the frozen kernel
            frozen = {k: 0 for k in st.accepted}
            st.accepted, st.proposed = dict(frozen), dict(frozen)
        st = mcmc_step(st, post, rng, rate)
        if post.adaptive:
            st = depth_move(st, post, rng)
        ll[t], lp[t], dp[t] = st.log_lik, st.log_prior, st.depth
        if record_density and t >= burnin and (t - burnin) % thin == 0:
            dens = post.model(st.depth).density(st.logits, st.edge_logits)
            samples.append(cell_averages(dens, grid))
            sample_depth.append(st.depth)
    trace = ChainTrace(ll, lp, dp.astype(int), np.array(samples).reshape(-1, grid),
                       np.array(sample_depth, dtype=int))
    return trace, summarize(trace, st, grid, level, burnin)


def summarize(trace: ChainTrace, state: ChainState, grid: int, level: float,
              burnin: int) -> PosteriorSummary:
    warnings = []
    acceptance = {}
    for k in state.proposed:
        if state.proposed[k]:
            rate = state.accepted[k] / state.proposed[k]
            acceptance[k] = rate
            if rate < LOW_ACCEPT:
                warnings.append(f"low acceptance for {k} moves: {rate:.3f}")
    if state.rejected_nonfinite:
        acceptance["nonfinite_rejections"] = state.rejected_nonfinite
    post_depth = trace.depth[burnin:]
    values, counts = np.unique(post_depth, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    s = trace.samples
    if len(s):
        mean = s.mean(axis=0)
        a = 0.5 * (1.0 - level)
        lower = np.minimum(np.quantile(s, a, axis=0), mean)
        upper = np.maximum(np.quantile(s, 1.0 - a, axis=0), mean)
    else:
        mean = lower = upper = np.full(grid, np.nan)
    for w in warnings:
        log.warning(w)
    return PosteriorSummary(
        grid, mean, lower, upper, level, hist, acceptance,
        effective_sample_size(trace.log_lik[burnin:]), warnings,
    )

