"""Synthetic Holder truths and inverse-CDF data generation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dyadic import strict_floor
from ..errors import DomainError
from ..posterior import Dataset

CDF_CELLS = 2**16
FLOOR = 0.5


@dataclass(frozen=True)
class HolderTruth:
    """Closed-form density ``f0`` on [0, 1) with known smoothness.

    ``cusp``: ``1 + c (|x - x0|^alpha - mu)`` where ``mu`` is the mean of
    ``|x - x0|^alpha`` and ``c = (1 - rho) / mu`` puts the minimum at ``rho``.
    Its top derivative ``|x - x0|^(alpha - k)`` (``k = strict_floor(alpha)``)
    is exactly ``(alpha - k)``-Holder, so one formula covers every alpha.
    ``cos``: ``1 + 0.5 cos(2 pi x)``, smooth of every order.
    ``uniform``: ``f0 = 1``.
    """

    alpha: float
    variant: str = "cusp"
    center: float = 0.5
    rho: float = FLOOR
    scale: float = 0.0
    mean: float = 0.0
    seminorm: float = 0.0

    def evaluate(self, x):
        xa = np.asarray(x, dtype=float)
        if self.variant == "uniform":
            return np.ones_like(xa)
        if self.variant == "cos":
            return 1.0 + 0.5 * np.cos(2.0 * np.pi * xa)
        return 1.0 + self.scale * (np.abs(xa - self.center) ** self.alpha - self.mean)

    __call__ = evaluate

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        if self.variant == "uniform":
            return xa.copy()
        if self.variant == "cos":
            return xa + 0.25 * np.sin(2.0 * np.pi * xa) / np.pi
        a, x0 = self.alpha + 1.0, self.center
        d = xa - x0
        prim = (x0**a + np.sign(d) * np.abs(d) ** a) / a
        return xa + self.scale * (prim - self.mean * xa)

    def breakpoints(self) -> np.ndarray:
        return np.array([self.center]) if self.variant == "cusp" else np.empty(0)

    @property
    def normalization(self) -> float:
        return float(self.cdf(1.0))


def holder_density(alpha: float, variant: str = "cusp", center: float = 0.5) -> HolderTruth:
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    k = strict_floor(alpha)
    beta = alpha - k
    if variant == "uniform":
        return HolderTruth(alpha, "uniform", rho=1.0)
    if variant == "cos":
        # interpolate between sup bounds of the k-th and (k+1)-th derivatives
        top = 0.5 * (2.0 * np.pi) ** k
        return HolderTruth(
            alpha, "cos", rho=FLOOR,
            seminorm=float((2.0 * top) ** (1.0 - beta) * (2.0 * np.pi * top) ** beta),
        )
    if variant != "cusp":
        raise DomainError(f"unknown truth variant {variant!r}")
    if not 0.0 <= center <= 1.0:
        raise DomainError(f"center must lie in [0, 1], got {center}")
    mu = (center ** (alpha + 1) + (1.0 - center) ** (alpha + 1)) / (alpha + 1)
    c = (1.0 - FLOOR) / mu
    falling = math.prod(alpha - j for j in range(k))
    # |a|^b +- |b|^b against |a - b|^b: worst case is opposite signs, 2^(1-b)
    semi = c * falling * 2.0 ** (1.0 - beta)
    return HolderTruth(alpha, "cusp", center, FLOOR, c, mu, semi)


def sample_data(truth: HolderTruth, n: int, rng: np.random.Generator,
                cells: int = CDF_CELLS) -> Dataset:
    """Inverse-CDF sampling through a tabulated CDF with linear interpolation."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    u = rng.random(n)
    grid = np.arange(cells + 1) / cells
    table = truth.cdf(grid)
    table = table / table[-1]
    x = np.interp(u, table, grid)
    return Dataset(np.minimum(x, np.nextafter(1.0, 0.0)))
