import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthogonal
from nssjd.blockcov import block_covariances
from nssjd.data import RngStream, SeriesMatrix
from nssjd.estimator import JdOptions, nss_jd, recover_sources
from nssjd.mdi import mdi, optimal_signed_permutation
from nssjd.models import calibrate_unit_covariance, model1, model3, simulate
from nssjd.symlinalg import DefinitenessError


def min_signed_perm_error(a: np.ndarray, b: np.ndarray) -> float:
    """min_G ||a - G b||_F / ||b||_F over signed permutations acting on columns."""
    p = a.shape[1]
    # match columns by absolute correlation, then fix signs
    corr = (a.T @ b) / np.outer(np.linalg.norm(a, axis=0), np.linalg.norm(b, axis=0))
    g, _ = optimal_signed_permutation(corr.T)
    # column i of b @ G' is signs[i] * b[:, perm[i]]
    return float(np.linalg.norm(a - b @ g.matrix().T) / np.linalg.norm(b))


def random_sources(seed, p, t_len=1000, s=10):
    gen = np.random.default_rng(seed)
    k = t_len // s
    scales = gen.uniform(0.3, 3.0, (k, p))
    return gen.standard_normal((t_len, p)) * np.repeat(scales, s, axis=0)


@pytest.mark.parametrize("p", [2, 3, 4, 5, 6])
def test_whitening_exact(p):
    x = random_sources(p, p) @ np.random.default_rng(p + 10).standard_normal((p, p))
    est = nss_jd(x, 10)
    assert est.whitening_residual() < 1e-10
    assert np.linalg.norm(est.w - est.u @ est.whitener) <= 1e-12 * np.linalg.norm(est.w)


def test_white_diagonal_sources_give_signed_permutation():
    model = calibrate_unit_covariance(model1(), 2000, 100, n_layouts=200)
    z, _ = simulate(model, 200_000, RngStream(1))
    est = nss_jd(z, 100)
    assert mdi(est.w, np.eye(3)).mdi < 0.05


def test_two_block_rotation_example():
    gen = np.random.default_rng(5)
    t_len, s = 20_000, 100
    half = t_len // 2
    sd = np.ones((t_len, 2))
    sd[:half] = np.sqrt([1.0, 2.0])
    sd[half:] = np.sqrt([2.0, 1.0])
    # unit average block covariance, so W A is close to a signed permutation
    z = gen.standard_normal((t_len, 2)) * sd / np.sqrt(1.5 * (1 - 1 / s))
    a = random_orthogonal(gen, 2)
    est = nss_jd(z @ a.T, s)
    assert mdi(est.w, a).mdi < 0.05


def test_constant_series_is_definiteness_error():
    with pytest.raises(DefinitenessError):
        nss_jd(np.ones((100, 2)), 10)


def test_single_block_refused():
    with pytest.raises(ValueError, match="at least 2 blocks"):
        nss_jd(np.random.default_rng(0).standard_normal((15, 2)), 10)


def test_recover_sources_examples():
    est = nss_jd(random_sources(0, 2), 10)
    x = SeriesMatrix(np.ones((3, 2)))
    object.__setattr__(est, "w", np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(recover_sources(est, x).values, [[2.0, 3.0]] * 3)
    object.__setattr__(est, "w", np.eye(2))
    assert recover_sources(est, x) == x
    with pytest.raises(ValueError, match="dimension mismatch"):
        recover_sources(est, np.ones((3, 3)))


def test_recovered_sources_are_white():
    x = random_sources(2, 3) @ np.random.default_rng(3).standard_normal((3, 3))
    est = nss_jd(x, 10)
    src = recover_sources(est, x)
    np.testing.assert_allclose(block_covariances(src, 10).average, np.eye(3), atol=1e-8)


def test_order_by_nonstationarity_is_a_row_permutation():
    x = random_sources(4, 3)
    a = nss_jd(x, 10)
    b = nss_jd(x, 10, JdOptions(order_by_nonstationarity=True))
    g, dist = optimal_signed_permutation(b.w @ np.linalg.inv(a.w))
    assert dist < 1e-10


def test_scale_convention_diagnostic():
    model = calibrate_unit_covariance(model3(), 320, 100)
    z, _ = simulate(model, 32_000, RngStream(2))
    est = nss_jd(z, 100)
    avg = block_covariances(z @ est.w.T, 100).average
    np.testing.assert_allclose(avg, np.eye(3), atol=0.1)
    g, _ = optimal_signed_permutation(est.w)
    np.testing.assert_allclose(g.matrix() @ est.w, np.eye(3), atol=0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_affine_equivariance(seed):
    gen = np.random.default_rng(seed)
    x = random_sources(seed, 3)
    lmat = gen.standard_normal((3, 3))
    if np.linalg.cond(lmat) > 1e3:
        lmat = lmat + 3 * np.eye(3)
    src_x = recover_sources(nss_jd(x, 10), x).values
    lx = x @ lmat.T
    src_lx = recover_sources(nss_jd(lx, 10), lx).values
    assert min_signed_perm_error(src_lx, src_x) < 1e-6
