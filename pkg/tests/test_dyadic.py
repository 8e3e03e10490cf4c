import math

import numpy as np
import pytest
from scipy import stats

from polya_forest.dyadic import (
    DyadicIndex,
    TptParams,
    floor,
    heap_index,
    kappa,
    node_of_heap,
    sample_split_logits,
    sample_tpt,
    strict_floor,
    theta_from_logits,
    theta_from_splits,
    tpt_log_prior,
    tpt_log_prior_logit,
)
from polya_forest.errors import DomainError
from polya_forest.rng import stream


def test_kappa_examples():
    assert kappa(2, 3).word == "11"
    assert kappa(3, 5).word == "101"
    assert kappa(2, 1).interval == (0.25, 0.5)
    assert kappa(0, 0).word == ""


def test_kappa_domain():
    with pytest.raises(DomainError):
        kappa(2, 4)
    with pytest.raises(DomainError):
        kappa(2, -1)


def test_kappa_round_trip():
    for l in range(13):
        for k in range(2**l):
            d = kappa(l, k)
            assert sum(b * 2.0 ** -(j + 1) for j, b in enumerate(d.bits)) == k / 2**l
            assert DyadicIndex.from_bits(d.bits) == d


def test_heap_order():
    for i in range(63):
        d = node_of_heap(i)
        assert heap_index(d.level, d.position) == i


def test_floors_are_distinct():
    assert strict_floor(2) == 1
    assert floor(2) == 2
    assert strict_floor(2.5) == floor(2.5) == 2
    assert strict_floor(0.5) == 0
    assert strict_floor(1.0) == 0


def test_params_validation():
    with pytest.raises(DomainError):
        TptParams(2, np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        TptParams(0, np.ones(0))
    with pytest.raises(DomainError):
        TptParams(2, np.array([1.0, 50.0]), bounds=(0.1, 1.0, 10.0), n=100)
    TptParams(2, np.array([1.0, 5.0]), bounds=(0.1, 1.0, 10.0), n=100)


def test_params_with_depth():
    p = TptParams(2, np.array([1.0, 3.0])).with_depth(4)
    assert p.level_params.tolist() == [1.0, 3.0, 3.0, 3.0]
    assert p.node_params().tolist() == [1.0, 3.0, 3.0] + [3.0] * 4 + [3.0] * 8


def test_depth_one_draw():
    d = sample_tpt(TptParams.constant(1, 2.0), stream(1, "t"))
    assert d.theta.tolist() == [d.splits[0], 1.0 - d.splits[0]]


def test_symmetric_splits():
    assert theta_from_splits(np.full(3, 0.5)).tolist() == [0.25] * 4


def test_theta_sums_to_one():
    for seed in range(20):
        d = sample_tpt(TptParams.constant(6, 0.7), stream(seed, "t"))
        assert abs(d.theta.sum() - 1.0) <= 1e-12
        assert d.depth == 6


def test_reconstruction_is_bitwise():
    p = TptParams.constant(5, 1.3)
    r = stream(3, "recon")
    for _ in range(1000):
        d = sample_tpt(p, r)
        assert np.array_equal(theta_from_splits(d.splits), d.theta)


def test_logit_and_split_paths_agree():
    p = TptParams.constant(4, 1.0)
    d = sample_tpt(p, stream(0, "t"))
    assert np.allclose(theta_from_logits(d.logits), d.theta, rtol=1e-12)


def test_marginal_means():
    depth, n = 3, 20_000
    z = sample_split_logits(np.tile(TptParams.constant(depth, 0.8).node_params(), n),
                            stream(7, "means"))
    y = 1.0 / (1.0 + np.exp(-z.reshape(n, -1)))
    theta = np.array([theta_from_splits(row) for row in y])
    se = theta.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(theta.mean(axis=0) - 2.0**-depth) <= 3 * se + 1e-12)


@pytest.mark.parametrize("a", [0.05, 1.0, 4.0])
def test_beta_law(a):
    z = sample_split_logits(np.full(20_000, a), stream(11, "beta"))
    assert np.all(np.isfinite(z))
    # compare in logit space: expit saturates at 1.0 for the small shapes
    law = stats.beta(a, a)

    def cdf(t):
        lower = law.cdf(1.0 / (1.0 + np.exp(np.abs(t))))
        return np.where(t <= 0, lower, 1.0 - lower)

    assert stats.kstest(z, cdf).pvalue > 1e-3


def test_tiny_shapes_stay_finite():
    z = sample_split_logits(np.full(1000, 1e-3), stream(2, "tiny"))
    assert np.all(np.isfinite(z))


def test_log_prior_examples():
    assert tpt_log_prior(TptParams.constant(3, 1.0), np.random.default_rng(0).random(7)) == 0.0
    assert tpt_log_prior(TptParams.constant(1, 2.0), [0.5]) == pytest.approx(math.log(1.5), abs=1e-12)
    assert tpt_log_prior(TptParams.constant(1, 2.0), [0.0]) == -math.inf
    assert math.log(1.5) == pytest.approx(0.4055, abs=5e-5)


def test_log_prior_matches_scipy():
    p = TptParams(2, np.array([0.7, 2.5]))
    y = np.array([0.2, 0.9, 0.4])
    ref = stats.beta(0.7, 0.7).logpdf(0.2) + stats.beta(2.5, 2.5).logpdf([0.9, 0.4]).sum()
    assert tpt_log_prior(p, y) == pytest.approx(ref, rel=1e-12)


def test_logit_prior_is_prior_plus_jacobian():
    p = TptParams(2, np.array([0.7, 2.5]))
    z = np.array([-1.2, 0.3, 2.0])
    y = 1.0 / (1.0 + np.exp(-z))
    jac = np.sum(np.log(y) + np.log1p(-y))
    assert tpt_log_prior_logit(p, z) == pytest.approx(tpt_log_prior(p, y) + jac, rel=1e-12)
