import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nssjd.blockcov import block_covariances, population_block_covariances
from nssjd.data import RngStream, SeriesMatrix
from nssjd.models import ModelSpec, model1, simulate


def test_constant_block_is_zero():
    x = np.vstack([np.full((3, 2), 5.0), np.arange(6.0).reshape(3, 2)])
    bc = block_covariances(x, 3)
    np.testing.assert_array_equal(bc.per_block[0], np.zeros((2, 2)))


def test_hand_example():
    bc = block_covariances(SeriesMatrix([[0.0, 0.0], [2.0, 4.0]]), 2)
    np.testing.assert_allclose(bc.per_block[0], [[1.0, 2.0], [2.0, 4.0]])
    assert (bc.n_blocks, bc.n_dropped_tail, bc.block_len) == (1, 0, 2)


def test_blockwise_centering_differs_from_global():
    x = np.array([[0.0], [0.0], [10.0], [10.0]])
    bc = block_covariances(x, 2)
    np.testing.assert_array_equal(bc.average, [[0.0]])
    assert np.cov(x.T, bias=True) > 0


def test_tail_dropped_and_errors():
    x = np.random.default_rng(0).standard_normal((23, 2))
    bc = block_covariances(x, 5)
    assert bc.n_blocks * bc.block_len + bc.n_dropped_tail == 23
    np.testing.assert_array_equal(bc.per_block, block_covariances(x[:20], 5).per_block)
    with pytest.raises(ValueError):
        block_covariances(x, 1)
    with pytest.raises(ValueError):
        block_covariances(x, 24)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 12), st.integers(1, 8))
def test_invariants(seed, p, s, k):
    gen = np.random.default_rng(seed)
    t_len = k * s + int(gen.integers(0, s))
    x = gen.standard_normal((t_len, p)) * gen.uniform(0.1, 5, p)
    bc = block_covariances(x, s)
    assert bc.n_blocks * s + bc.n_dropped_tail == t_len
    np.testing.assert_allclose(bc.average, bc.per_block.mean(axis=0), rtol=1e-12, atol=1e-14)
    for c in bc.per_block:
        assert np.array_equal(c, c.T)
    assert bc.psd_violation() <= 1e-10
    # the average is exactly the left-to-right sum divided by K
    total = np.zeros((p, p))
    for c in bc.per_block:
        total = total + c
    assert np.array_equal(total / bc.n_blocks, bc.average)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 10))
def test_congruence_equivariance(seed, p, s):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((5 * s, p))
    lmat = gen.standard_normal((p, p)) + 3 * np.eye(p)
    a = block_covariances(x @ lmat.T, s).per_block
    b = np.einsum("ab,kbc,dc->kad", lmat, block_covariances(x, s).per_block, lmat)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(b)


def test_population_white_noise():
    model = ModelSpec("custom", 3, ((1.0,), (1.0,), (1.0,)), layout="equal_segments", n_variance_blocks=1)
    for s in (2, 5, 10):
        for c in population_block_covariances(model, 4, s):
            np.testing.assert_allclose(c, (1 - 1 / s) * np.eye(3))


def test_population_model1_pattern_block():
    model = ModelSpec("custom", 3, ((1.0,), (2.0,), (3.0,)), layout="equal_segments", n_variance_blocks=1)
    np.testing.assert_allclose(population_block_covariances(model, 1, 10)[0], np.diag([0.9, 1.8, 2.7]))


def test_population_needs_layout_for_random_models():
    with pytest.raises(ValueError):
        population_block_covariances(model1(), 3, 10)


def test_white_noise_monte_carlo():
    # 10^6 draws in blocks of s = 4: E[(Z_a - Zbar)^2] = (1 - 1/s)
    x = np.random.default_rng(3).standard_normal((1_000_000, 1))
    bc = block_covariances(x, 4)
    vals = bc.per_block[:, 0, 0]
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - 0.75) < 4 * se


def test_mc_consistency_with_population():
    model = ModelSpec(
        "custom", 2, ((1.0, 4.0), (3.0, 0.5)), layout="equal_segments", ma_coeffs=((0.6,), (-0.4, 0.2))
    )
    k, s, n = 4, 6, 10_000
    pop = np.stack(population_block_covariances(model, k, s))
    draws = np.stack(
        [block_covariances(simulate(model, k * s, RngStream(9, r))[0], s).per_block for r in range(n)]
    )
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(mean - pop) <= 4 * se + 1e-12)
