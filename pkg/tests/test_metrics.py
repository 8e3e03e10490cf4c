import math

import numpy as np
import pytest
from scipy import integrate

from polya_forest.aggregate import GridDensity, SplineDensity
from polya_forest.dyadic import TptParams, sample_tpt
from polya_forest.errors import ContractError, DomainError
from polya_forest.metrics import distance, hellinger, kl_and_v
from polya_forest.priors import PriorConfig, sample_cpa, spt_map
from polya_forest.rng import stream


def random_grid(rng, cells):
    v = rng.gamma(2.0, size=cells)
    return GridDensity(v / v.mean())


def test_identical():
    f = random_grid(np.random.default_rng(0), 16)
    for metric in ("hellinger", "l1", "sup"):
        assert distance(metric, f, f) == 0.0
    assert kl_and_v(f, f) == (0.0, 0.0)


def test_disjoint_supports():
    f, g = GridDensity([2.0, 0.0]), GridDensity([0.0, 2.0])
    assert distance("hellinger", f, g) == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert math.sqrt(2.0) == pytest.approx(1.41421, abs=1e-5)
    assert distance("l1", f, g) == pytest.approx(2.0)
    assert distance("sup", f, g) == 2.0


def test_disjoint_supports_quadrature():
    # same value through the generic quadrature path with callables
    f = lambda x: np.where(x < 0.5, 2.0, 0.0)
    g = lambda x: np.where(x >= 0.5, 2.0, 0.0)
    assert distance("hellinger", f, g) == pytest.approx(math.sqrt(2.0), abs=1e-6)


def test_kl_examples():
    k, v = kl_and_v(GridDensity([2.0, 0.0]), GridDensity([1.0]))
    assert k == pytest.approx(math.log(2.0), abs=1e-12)
    assert v == pytest.approx(0.0, abs=1e-12)
    assert kl_and_v(GridDensity([1.0]), GridDensity([2.0, 0.0])) == (math.inf, math.inf)


def test_kl_against_scipy_quad():
    f0 = lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x)
    f = lambda x: 0.5 + x
    ref_k, _ = integrate.quad(lambda x: f0(x) * math.log(f0(x) / f(x)), 0, 1, epsabs=1e-13)
    ref_v, _ = integrate.quad(lambda x: f0(x) * (math.log(f0(x) / f(x)) - ref_k) ** 2, 0, 1,
                              epsabs=1e-13)
    k, v = kl_and_v(f0, f)
    assert k == pytest.approx(ref_k, abs=1e-10)
    assert v == pytest.approx(ref_v, abs=1e-10)


def test_gibbs_and_asymmetry():
    rng = np.random.default_rng(1)
    for _ in range(100):
        f, g = random_grid(rng, 8), random_grid(rng, 16)
        assert kl_and_v(f, g)[0] >= -1e-12
    f, g = random_grid(rng, 4), random_grid(rng, 4)
    assert kl_and_v(f, g)[0] != pytest.approx(kl_and_v(g, f)[0], rel=1e-3)


def test_symmetry_and_sandwich():
    rng = np.random.default_rng(2)
    for _ in range(50):
        f, g = random_grid(rng, 8), random_grid(rng, 12)
        h = distance("hellinger", f, g)
        l1 = distance("l1", f, g)
        assert h == pytest.approx(distance("hellinger", g, f), abs=1e-14)
        assert l1 == pytest.approx(distance("l1", g, f), abs=1e-14)
        assert h**2 <= l1 + 1e-6
        assert l1 <= h * math.sqrt(h**2 + 4.0) + 1e-6


def test_common_grid_equals_quadrature():
    rng = np.random.default_rng(3)
    f, g = random_grid(rng, 8), random_grid(rng, 12)
    exact = distance("hellinger", f, g)
    quad = distance("hellinger", f.evaluate, g.evaluate)
    assert exact == pytest.approx(quad, abs=1e-3)


def test_breakpoints_make_grid_quadrature_exact():
    rng = np.random.default_rng(4)
    f, g = random_grid(rng, 8), random_grid(rng, 12)
    spline = SplineDensity(sample_cpa(PriorConfig("cpa", 0, 2), stream(0, "m")).sequence)
    # a piecewise-constant spline versus a grid: breakpoints align, so GL is exact
    ref = distance("l1", GridDensity(spline.cell_averages(24)), f)
    assert distance("l1", spline, f) == pytest.approx(ref, abs=1e-12)
    assert distance("l1", f, g) >= 0.0


def test_quadrature_convergence():
    t1 = sample_tpt(TptParams.constant(4, 0.5), stream(1, "conv")).theta
    t2 = sample_tpt(TptParams.constant(4, 0.5), stream(2, "conv")).theta
    f, g = spt_map(t1, 2, 0.05), spt_map(t2, 2, 0.05)
    for metric in ("hellinger", "l1"):
        a = distance(metric, f, g, panels=2**12)
        b = distance(metric, f, g, panels=2**13)
        assert abs(a - b) < 1e-7


def test_contract_errors():
    with pytest.raises(ContractError):
        distance("l1", GridDensity([2.0, -0.1]), GridDensity([1.0]))
    with pytest.raises(ContractError):
        kl_and_v(GridDensity([2.0, -0.1]), GridDensity([1.0]))
    with pytest.raises(DomainError):
        distance("tv", GridDensity([1.0]), GridDensity([1.0]))
    assert hellinger(GridDensity([1.0]), GridDensity([1.0])) == 0.0


def test_cpa_coefficient_bound():
    cfg = PriorConfig("cpa", 2, 4, bound=6.0)
    for seed in range(20):
        a = sample_cpa(cfg, stream(seed, "pair-a"))
        b = sample_cpa(cfg, stream(seed, "pair-b"))
        gap = np.linalg.norm(a.sequence.base - b.sequence.base)
        assert distance("hellinger", a, b) <= (16 + 2) ** 0.25 * gap**0.5
