"""Boundary-corrected coefficient sequences and shift-aggregation.

A coefficient sequence ``u`` (stored as one period ``base``) defines the step
function ``f = sum_i u_i * height * 1[i/2^L, (i+1)/2^L)`` on the real line.
For the prior's boundary-corrected sequences the period is ``2^L + m`` and
``height = 2^L`` (the cell masses Theta_i become density heights); plain
periodic sequences of density values use period ``2^L`` and ``height = 1``.

The discrete aggregation of order ``m`` averages ``q`` shifted copies of
``f`` by steps of ``2^-L / q``, ``m`` times over.  Its ``q -> infinity``
limit is the spline ``sum_j u_j * height * chi^{*(m+1)}(2^L x - j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

from . import quadrature
from .errors import ConfigurationError, DegenerateDensityError, DomainError, ResourceError
from .kernel import KernelTable, default_table

MAX_FINE_CELLS = 2**31


@dataclass
class BoundarySequence:
    depth: int
    order: int
    base: np.ndarray
    height: float
    bound: float = math.inf
    theta: np.ndarray | None = field(default=None, repr=False)
    edge: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        if self.order < 0:
            raise DomainError(f"order must be >= 0, got {self.order}")

    @property
    def period(self) -> int:
        return len(self.base)

    @property
    def cells(self) -> int:
        return 2**self.depth

    def coefficient(self, i):
        return self.base[np.mod(i, self.period)]

    @classmethod
    def periodic(cls, values, depth: int, order: int, height: float = 1.0) -> "BoundarySequence":
        """A plain ``2^depth``-periodic sequence (no boundary correction)."""
        values = np.asarray(values, dtype=float)
        if len(values) != 2**depth:
            raise DomainError(f"need {2**depth} values for depth {depth}, got {len(values)}")
        return cls(depth, order, values, height)


def edge_intervals(theta: np.ndarray, m: int, bound: float, table: KernelTable | None = None):
    """Lower and upper ends of the uniform interval for each edge coordinate.

    Entry ``r`` refers to cell ``i = 2^L - m + r``.
    """
    table = table or default_table()
    n = len(theta)
    i = np.arange(n - m, n)
    w = table.omegas(m)[n - i]
    th = theta[i]
    with np.errstate(invalid="ignore"):
        lo = np.maximum(0.0, (th - (1.0 - w) * bound) / w) if math.isfinite(bound) else np.zeros(m)
    hi = np.minimum(bound, th / w)
    return lo, hi, w


def decode_boundary(
    theta, m: int, bound: float, fractions, table: KernelTable | None = None
) -> BoundarySequence:
    """Boundary-corrected sequence with each ``v_i = lo + fraction * (hi - lo)``."""
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    depth = int(round(math.log2(n)))
    if 2**depth != n:
        raise DomainError(f"theta length {n} is not a power of two")
    if not 2 ** (depth - 1) > m:
        raise ConfigurationError(f"order m={m} needs 2^(L-1) > m, got L={depth}")
    base = np.empty(n + m)
    base[:n] = theta
    edge = np.empty(0)
    if m > 0:
        lo, hi, w = edge_intervals(theta, m, bound, table)
        if np.any(lo > hi * (1 + 1e-12) + 1e-300):
            r = int(np.flatnonzero(lo > hi)[0])
            raise ConfigurationError(
                f"empty uniform interval at index {n - m + r}: "
                f"Theta={theta[n - m + r]:.6g} exceeds U={bound}"
            )
        hi = np.maximum(lo, hi)
        edge = lo + np.asarray(fractions, dtype=float) * (hi - lo)
        th = theta[n - m :]
        base[n - m : n] = edge
        base[n:] = np.maximum((th - w * edge) / (1.0 - w), 0.0)
    return BoundarySequence(depth, m, base, float(n), bound, theta.copy(), edge)


def build_boundary_sequence(theta, m: int, bound: float, rng: np.random.Generator,
                            table: KernelTable | None = None) -> BoundarySequence:
    """Step 1 of the DPA/CPA construction: uniform redraw of the edge coefficients."""
    fractions = rng.random(m) if m > 0 else np.empty(0)
    return decode_boundary(theta, m, bound, fractions, table)


def normalization_sum(seq: BoundarySequence, table: KernelTable | None = None) -> float:
    """Left-hand side of the coefficient normalization constraint (equals 1)."""
    table = table or default_table()
    n, m, u = seq.cells, seq.order, seq.coefficient
    w = table.omegas(m)
    total = math.fsum(u(np.arange(0, n - m)))
    for i in range(n - m, n):
        total += w[n - i] * u(i) + w[i - (n - m - 1)] * u(i + m)
    return float(total)


def integral_weights(depth: int, m: int, period: int, table: KernelTable | None = None) -> np.ndarray:
    """Vector ``c`` with ``integral over [0, 1] = height * 2^-L * (c @ base)``."""
    table = table or default_table()
    n = 2**depth
    w = table.omegas(m)
    c = np.zeros(period)
    for i in range(-m, 0):
        c[i % period] += 1.0 - w[-i]
    np.add.at(c, np.arange(0, n - m) % period, 1.0)
    for i in range(n - m, n):
        c[i % period] += w[n - i]
    return c


def integral_unit_interval(seq: BoundarySequence, table: KernelTable | None = None) -> float:
    """Exact integral of the continuous aggregation over [0, 1]."""
    c = integral_weights(seq.depth, seq.order, seq.period, table)
    return float(seq.height * 2.0**-seq.depth * math.fsum(c * seq.base))


def spline_design(depth: int, m: int, period: int, x, table: KernelTable | None = None):
    """Index and kernel-weight arrays, shape ``(len(x), m+1)``.

    The continuous aggregation at ``x`` equals
    ``height * sum(base[index] * weight, axis=1)``.
    """
    table = table or default_table()
    t = np.asarray(x, dtype=float) * 2.0**depth
    j0 = np.floor(t)
    frac = t - j0
    r = np.arange(m + 1)
    index = np.mod(j0.astype(np.int64)[:, None] - r[None, :], period)
    weight = table.eval(m + 1, (frac[:, None] + r[None, :]).ravel()).reshape(index.shape)
    return index, weight


def aggregate_continuous_eval(seq: BoundarySequence, x, table: KernelTable | None = None):
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    index, weight = spline_design(seq.depth, seq.order, seq.period, xa, table)
    out = seq.height * np.sum(seq.base[index] * weight, axis=1)
    return out if np.ndim(x) else float(out[0])


@dataclass
class GridDensity:
    """Step function with value ``values[j]`` on ``[j/N, (j+1)/N)``."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def cells(self) -> int:
        return len(self.values)

    def integral(self) -> float:
        return math.fsum(self.values) / self.cells

    def evaluate(self, x):
        xa = np.asarray(x, dtype=float)
        j = np.clip((xa * self.cells).astype(np.int64), 0, self.cells - 1)
        return self.values[j]

    __call__ = evaluate

    def breakpoints(self) -> np.ndarray:
        return np.arange(self.cells + 1) / self.cells

    def cell_averages(self, n_cells: int) -> np.ndarray:
        """Exact averages over an ``n_cells`` uniform grid."""
        n = self.cells
        if n_cells % n == 0:
            return np.repeat(self.values, n_cells // n)
        cum = np.concatenate([[0.0], np.cumsum(self.values) / n])
        edges = np.arange(n_cells + 1) / n_cells
        prim = np.interp(edges, np.arange(n + 1) / n, cum)
        return np.diff(prim) * n_cells


def aggregate_discrete(seq: BoundarySequence, q: int) -> GridDensity:
    """Order-``m`` discrete aggregation on the fine grid of ``q * 2^L`` cells.

    Each of the ``m`` passes is a backward moving average of width ``q`` over
    the extended fine grid, computed with running sums.
    """
    if q < 1:
        raise DomainError(f"number of trees q must be >= 1, got {q}")
    n, m = seq.cells, seq.order
    fine = q * n
    if fine > MAX_FINE_CELLS:
        raise ResourceError(f"fine grid of {fine} cells exceeds {MAX_FINE_CELLS}")
    coarse = seq.height * seq.coefficient(np.arange(-m, n))
    g = np.repeat(coarse, q)
    for _ in range(m):
        # recentring keeps the running sum small; each pass drops q-1 leading cells
        shift = g.mean()
        cs = np.concatenate([[0.0], np.cumsum(g - shift)])
        g = (cs[q:] - cs[:-q]) / q + shift
    return GridDensity(g[len(g) - fine :])


def normalize_density(g: GridDensity) -> GridDensity:
    total = g.integral()
    if not total > 0.0:
        raise DegenerateDensityError(f"density integral {total} is not positive")
    return GridDensity(g.values / total, normalized=True)


@dataclass
class SplineDensity:
    """Spline density from a coefficient sequence, with optional SPT edge pieces.

    ``p1`` / ``p2`` are Chebyshev coefficients (local coordinate in [-1, 1]
    on the defining knot cell ``[m/2^L, (m+1)/2^L)`` resp.
    ``[1 - (m+1)/2^L, 1 - m/2^L)``) of the polynomials replacing the spline
    on ``[0, m/2^L)`` resp. ``[1 - m/2^L, 1)``.  With ``tau`` set the
    density is ``(max(raw, 0) + tau) / normalizer``.
    """

    sequence: BoundarySequence
    p1: np.ndarray | None = None
    p2: np.ndarray | None = None
    tau: float | None = None
    normalizer: float = 1.0

    @property
    def depth(self) -> int:
        return self.sequence.depth

    @property
    def order(self) -> int:
        return self.sequence.order

    def _local(self, x, left: bool):
        h = 2.0**-self.depth
        m = self.order
        a = m * h if left else 1.0 - (m + 1) * h
        return 2.0 * (x - a) / h - 1.0

    def raw(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = aggregate_continuous_eval(self.sequence, xa)
        h = 2.0**-self.depth
        m = self.order
        if self.p1 is not None:
            left = xa < m * h
            out[left] = C.chebval(self._local(xa[left], True), self.p1)
        if self.p2 is not None:
            right = xa >= 1.0 - m * h
            out[right] = C.chebval(self._local(xa[right], False), self.p2)
        return out

    def evaluate(self, x):
        r = self.raw(x)
        if self.tau is not None:
            r = np.maximum(r, 0.0) + self.tau
        out = r / self.normalizer
        return out if np.ndim(x) else float(out[0])

    __call__ = evaluate

    def edge_roots(self) -> np.ndarray:
        """Sign changes of the edge polynomials inside their regions."""
        if self.tau is None or self.order == 0:
            return np.empty(0)
        h = 2.0**-self.depth
        m = self.order
        return np.concatenate([
            quadrature.bisect_roots(self.raw, 0.0, m * h, 64 * m),
            quadrature.bisect_roots(self.raw, 1.0 - m * h, 1.0, 64 * m),
        ])

    def breakpoints(self) -> np.ndarray:
        knots = np.arange(self.sequence.cells + 1) / self.sequence.cells
        return np.concatenate([knots, self.edge_roots()])

    def cell_averages(self, n_cells: int) -> np.ndarray:
        npts = max(5, self.order // 2 + 2)
        return quadrature.cell_integrals(self.evaluate, n_cells, self.breakpoints(), npts) * n_cells

    def integral(self) -> float:
        npts = max(5, self.order // 2 + 2)
        edges = quadrature.merge_breakpoints(self.breakpoints())
        return quadrature.integrate(self.evaluate, edges, npts)
