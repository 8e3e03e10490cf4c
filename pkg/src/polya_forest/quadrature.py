"""Composite Gauss-Legendre rules on explicit breakpoints."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gl(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def merge_breakpoints(*arrays, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Sorted unique breakpoints inside [lo, hi], always including both ends."""
    pts = [np.array([lo, hi])]
    for a in arrays:
        if a is None:
            continue
        a = np.asarray(a, dtype=float).ravel()
        pts.append(a[(a > lo) & (a < hi)])
    return np.unique(np.concatenate(pts))


def segment_nodes(edges: np.ndarray, npts: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights, shape ``(len(edges) - 1, npts)``, for each segment."""
    x, w = _gl(npts)
    a = edges[:-1, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return a + half * (x[None, :] + 1.0), half * w[None, :]


def uniform_panels(panels: int, *breakpoints, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return merge_breakpoints(np.linspace(lo, hi, panels + 1), *breakpoints, lo=lo, hi=hi)


def integrate(fn, edges: np.ndarray, npts: int = 5) -> float:
    nodes, weights = segment_nodes(np.asarray(edges, dtype=float), npts)
    return float(np.sum(fn(nodes.ravel()).reshape(nodes.shape) * weights))


def cell_integrals(fn, n_cells: int, breakpoints=None, npts: int = 5) -> np.ndarray:
    """Integral of ``fn`` over each cell ``[j/n, (j+1)/n)`` of a uniform grid."""
    edges = merge_breakpoints(np.arange(n_cells + 1) / n_cells, breakpoints)
    nodes, weights = segment_nodes(edges, npts)
    seg = fn(nodes.ravel()).reshape(nodes.shape) * weights
    mids = 0.5 * (edges[:-1] + edges[1:])
    cell = np.minimum((mids * n_cells).astype(np.int64), n_cells - 1)
    out = np.zeros(n_cells)
    np.add.at(out, cell, seg.sum(axis=1))
    return out


def sign_changes(fn, edges: np.ndarray, iters: int = 60) -> np.ndarray:
    """Sign changes of ``fn`` between consecutive ``edges``, located by bisection."""
    edges = np.asarray(edges, dtype=float)
    v = fn(edges)
    exact = edges[1:-1][v[1:-1] == 0.0]
    idx = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
    lo, hi, flo = edges[idx], edges[idx + 1], v[idx]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return np.sort(np.concatenate([exact, 0.5 * (lo + hi)]))


def bisect_roots(fn, a: float, b: float, panels: int, iters: int = 60) -> np.ndarray:
    """Sign changes of ``fn`` on [a, b] inside ``panels`` uniform panels."""
    if b <= a:
        return np.empty(0)
    return sign_changes(fn, np.linspace(a, b, panels + 1), iters)


def positive_part_integral(fn, a: float, b: float, panels: int, npts: int = 5) -> float:
    """Integral of ``max(fn, 0)`` over [a, b], clipping at sign changes first."""
    if b <= a:
        return 0.0
    roots = bisect_roots(fn, a, b, panels)
    edges = merge_breakpoints(np.linspace(a, b, panels + 1), roots, lo=a, hi=b)
    return integrate(lambda t: np.maximum(fn(t), 0.0), edges, npts)
