"""Dyadic indexing and truncated Polya tree (TPT) draws.

Internal nodes of a depth-``L`` tree are stored level-major in heap order:
the node at level ``j`` (``|kappa| = j``) and position ``k`` sits at index
``2**j - 1 + k``.  Entry ``i`` of a split array holds ``Y_{kappa 0}``, the
fraction of the node's mass sent to its left child.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, expit, log_expit

from .errors import DomainError, NumericError


def strict_floor(x: float) -> int:
    """Largest integer strictly smaller than ``x`` (so ``strict_floor(2) == 1``).

    This is the floor used for Holder exponents; ``floor`` is the usual one.
    """
    f = math.floor(x)
    return int(f - 1) if f == x else int(f)


def floor(x: float) -> int:
    return int(math.floor(x))


@dataclass(frozen=True)
class DyadicIndex:
    level: int
    position: int
    bits: tuple[int, ...]

    @property
    def interval(self) -> tuple[float, float]:
        """The right-open cell ``[k/2^l, (k+1)/2^l)``."""
        return (self.position / 2**self.level, (self.position + 1) / 2**self.level)

    @property
    def word(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_bits(cls, bits) -> "DyadicIndex":
        bits = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in bits):
            raise DomainError(f"bits must be 0/1, got {bits}")
        l = len(bits)
        k = sum(b << (l - 1 - j) for j, b in enumerate(bits))
        return cls(l, k, bits)


def kappa(l: int, k: int) -> DyadicIndex:
    """Binary word of ``k / 2**l`` with exactly ``l`` digits."""
    if l < 0:
        raise DomainError(f"level must be nonnegative, got {l}")
    if not 0 <= k < 2**l:
        raise DomainError(f"position {k} outside [0, {2**l})")
    bits = tuple((k >> (l - 1 - j)) & 1 for j in range(l))
    return DyadicIndex(l, k, bits)


def heap_index(level: int, position: int) -> int:
    return 2**level - 1 + position


def node_of_heap(i: int) -> DyadicIndex:
    level = (i + 1).bit_length() - 1
    return kappa(level, i + 1 - 2**level)


@dataclass
class TptParams:
    """Depth and per-level Beta parameters ``a_1 .. a_L``.

    ``bounds = (delta, beta, R)`` together with ``n`` restricts every
    ``a_l`` to ``[delta (log n / n)^beta, R]``.
    """

    depth: int
    level_params: np.ndarray
    bounds: tuple[float, float, float] | None = None
    n: int | None = None

    def __post_init__(self):
        self.level_params = np.broadcast_to(
            np.asarray(self.level_params, dtype=float), (self.depth,)
        ).copy()
        if self.depth < 1:
            raise DomainError(f"depth must be >= 1, got {self.depth}")
        a = self.level_params
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise DomainError(f"Beta parameters must be finite and positive, got {a}")
        if self.bounds is not None:
            if self.n is None or self.n < 2:
                raise DomainError("bounds need the sample size n >= 2")
            delta, beta, r = self.bounds
            lo = delta * (math.log(self.n) / self.n) ** beta
            if np.any(a < lo) or np.any(a > r):
                raise DomainError(f"Beta parameters {a} outside [{lo:.3g}, {r}]")

    @classmethod
    def constant(cls, depth: int, a: float = 1.0) -> "TptParams":
        return cls(depth, np.full(depth, float(a)))

    def with_depth(self, depth: int) -> "TptParams":
        """Same per-level parameters, truncated or extended with the last value."""
        a = self.level_params
        if depth <= len(a):
            new = a[:depth]
        else:
            new = np.concatenate([a, np.full(depth - len(a), a[-1])])
        return TptParams(depth, new, self.bounds, self.n)

    def node_params(self) -> np.ndarray:
        """Beta shape for every internal node in heap order (level j uses a_{j+1})."""
        return np.repeat(self.level_params, 2 ** np.arange(self.depth))


@dataclass
class TptDraw:
    splits: np.ndarray
    theta: np.ndarray
    logits: np.ndarray | None = field(default=None, repr=False)

    @property
    def depth(self) -> int:
        return int(np.log2(len(self.theta)))


def theta_from_splits(splits: np.ndarray) -> np.ndarray:
    """Cell masses: products of split fractions down the tree, O(2^L)."""
    splits = np.asarray(splits, dtype=float)
    depth = int(np.log2(len(splits) + 1))
    mass = np.ones(1)
    for j in range(depth):
        y = splits[2**j - 1 : 2 ** (j + 1) - 1]
        nxt = np.empty(2 ** (j + 1))
        nxt[0::2] = mass * y
        nxt[1::2] = mass * (1.0 - y)
        mass = nxt
    return mass


def theta_from_logits(logits: np.ndarray) -> np.ndarray:
    """Same as :func:`theta_from_splits` but from logits, stable for tiny masses."""
    logits = np.asarray(logits, dtype=float)
    depth = int(np.log2(len(logits) + 1))
    logmass = np.zeros(1)
    for j in range(depth):
        z = logits[2**j - 1 : 2 ** (j + 1) - 1]
        nxt = np.empty(2 ** (j + 1))
        nxt[0::2] = logmass + log_expit(z)
        nxt[1::2] = logmass + log_expit(-z)
        logmass = nxt
    return np.exp(logmass)


def _log_gamma_variates(rng: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    # log G(a) = log G(a + 1) + log(U) / a keeps tiny shapes from underflowing
    g = rng.standard_gamma(shape + 1.0)
    u = rng.random(shape.shape)
    return np.log(g) + np.log(u) / shape


def sample_split_logits(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Logits of independent Beta(a_i, a_i) draws via a ratio of Gamma variates."""
    a = np.asarray(a, dtype=float)
    z = _log_gamma_variates(rng, a) - _log_gamma_variates(rng, a)
    bad = ~np.isfinite(z)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(
            f"non-finite Beta({a[i]}, {a[i]}) draw at node {node_of_heap(i).word or 'root'}"
        )
    return z


def sample_tpt(params: TptParams, rng: np.random.Generator) -> TptDraw:
    z = sample_split_logits(params.node_params(), rng)
    splits = expit(z)
    return TptDraw(splits=splits, theta=theta_from_splits(splits), logits=z)


def tpt_log_prior(params: TptParams, splits) -> float:
    """Sum of Beta log densities of the left fractions; -inf on the boundary."""
    y = np.asarray(splits, dtype=float)
    a = params.node_params()
    if y.shape != a.shape:
        raise DomainError(f"expected {a.size} splits for depth {params.depth}, got {y.size}")
    if np.any((y <= 0.0) | (y >= 1.0)):
        return -math.inf
    return float(np.sum((a - 1.0) * (np.log(y) + np.log1p(-y)) - betaln(a, a)))


def tpt_log_prior_logit(params: TptParams, logits) -> float:
    """Prior log density of the split logits (Beta density times the logistic Jacobian)."""
    z = np.asarray(logits, dtype=float)
    a = params.node_params()
    return float(np.sum(a * (log_expit(z) + log_expit(-z)) - betaln(a, a)))
