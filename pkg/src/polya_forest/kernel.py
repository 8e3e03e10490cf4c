"""Iterated convolutions of the unit indicator (cardinal B-spline kernels).

``kernel_eval(m, x)`` is the m-fold self-convolution of the indicator of
[0, 1], i.e. the Irwin-Hall density of a sum of ``m`` independent uniforms,
evaluated through its closed form

    (1 / (m-1)!) * sum_{k=0}^{floor(x)} (-1)^k C(m, k) (x - k)^(m-1)

on [0, m] and zero elsewhere.  ``omega(m, l)`` is the cumulative integral of
the order ``m+1`` kernel up to the integer ``l``, computed in exact rational
arithmetic.

The alternating sum loses accuracy as the order grows; orders above 25 are
refused outright and the default table stops at 16.  Evaluation folds the
argument onto the left half of the support (the kernel is symmetric about
m/2), which roughly halves the cancellation.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import DomainError, UnsupportedOrderError

DEFAULT_MAX_ORDER = 16
HARD_MAX_ORDER = 25


class KernelTable:
    """Evaluator for the kernels up to ``max_order`` with a cache of omegas.

    ``omega_overrides`` replaces selected cached weights. It exists so fault
    injection tests can corrupt the table; production code never sets it.
    """

    def __init__(self, max_order: int = DEFAULT_MAX_ORDER, omega_overrides=None):
        if not 1 <= max_order <= HARD_MAX_ORDER:
            raise UnsupportedOrderError(
                f"max_order must lie in [1, {HARD_MAX_ORDER}], got {max_order}"
            )
        self.max_order = int(max_order)
        self.omega_cache: dict[tuple[int, int], Fraction] = {}
        self._overrides = dict(omega_overrides or {})
        self._float_cache: dict[int, np.ndarray] = {}

    def _check_order(self, m: int) -> None:
        if not isinstance(m, (int, np.integer)) or m < 1 or m > self.max_order:
            raise UnsupportedOrderError(
                f"kernel order {m!r} not in [1, {self.max_order}]"
            )

    def eval(self, m: int, x):
        """Value of the order-``m`` kernel at ``x`` (scalar or array)."""
        self._check_order(m)
        xa = np.asarray(x, dtype=float)
        scalar = xa.ndim == 0
        xa = np.atleast_1d(xa)
        out = np.zeros_like(xa)
        if m == 1:
            # right-open convention keeps translates a partition of unity
            out[(xa >= 0.0) & (xa < 1.0)] = 1.0
        else:
            inside = (xa >= 0.0) & (xa <= m)
            y = np.minimum(xa[inside], m - xa[inside])
            acc = np.zeros_like(y)
            for k in range(0, m // 2 + 1):
                d = y - k
                term = math.comb(m, k) * np.where(d > 0.0, d, 0.0) ** (m - 1)
                acc += term if k % 2 == 0 else -term
            out[inside] = np.maximum(acc / math.factorial(m - 1), 0.0)
        return float(out[0]) if scalar else out

    def omega(self, m: int, l: int) -> Fraction:
        """Exact integral of the order ``m+1`` kernel over [0, l]."""
        if m < 0 or m + 1 > self.max_order:
            raise UnsupportedOrderError(f"omega order {m!r} not in [0, {self.max_order - 1}]")
        if not isinstance(l, (int, np.integer)) or l < 0 or l > m + 1:
            raise DomainError(f"omega index l={l!r} outside [0, {m + 1}]")
        key = (int(m), int(l))
        if key in self._overrides:
            return Fraction(self._overrides[key])
        if key not in self.omega_cache:
            n = m + 1
            total = sum(
                (-1) ** k * math.comb(n, k) * (l - k) ** n for k in range(0, l + 1)
            )
            self.omega_cache[key] = Fraction(total, math.factorial(n))
        return self.omega_cache[key]

    def omegas(self, m: int) -> np.ndarray:
        """Float array ``[omega(m, 0), ..., omega(m, m+1)]``."""
        if m not in self._float_cache:
            self._float_cache[m] = np.array(
                [float(self.omega(m, l)) for l in range(m + 2)]
            )
        return self._float_cache[m]

    def cdf(self, m: int, x):
        """Integral of the order-``m`` kernel over (-inf, x], in floating point."""
        self._check_order(m)
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.where(xa >= m, 1.0, 0.0)
        inside = (xa > 0.0) & (xa < m)
        y = xa[inside]
        left = y <= m / 2.0
        z = np.where(left, y, m - y)
        acc = np.zeros_like(z)
        for k in range(0, m // 2 + 1):
            d = z - k
            term = math.comb(m, k) * np.where(d > 0.0, d, 0.0) ** m
            acc += term if k % 2 == 0 else -term
        acc /= math.factorial(m)
        out[inside] = np.where(left, acc, 1.0 - acc)
        return out if np.ndim(x) else float(out[0])


_DEFAULT = KernelTable()
_active = _DEFAULT


def default_table() -> KernelTable:
    """Table used by module-level helpers and by the samplers."""
    return _active


def set_default_table(table: KernelTable | None) -> None:
    """Swap the process-wide table (``None`` restores the pristine one)."""
    global _active
    _active = _DEFAULT if table is None else table


def kernel_eval(m: int, x):
    return _active.eval(m, x)


def omega(m: int, l: int) -> Fraction:
    return _active.omega(m, l)
