"""The NSS-JD unmixing estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockcov import BlockCovSet, block_covariances
from .data import SeriesMatrix
from .jointdiag import JdResult, joint_diagonalize
from .symlinalg import inv_sqrt_spd


@dataclass(frozen=True)
class JdOptions:
    tol: float = 1e-10
    max_sweeps: int = 200
    order_by_nonstationarity: bool = False


@dataclass(frozen=True, eq=False)
class UnmixingEstimate:
    w: np.ndarray
    u: np.ndarray
    whitener: np.ndarray
    blockcov: BlockCovSet
    jd: JdResult

    def whitening_residual(self) -> float:
        """||W cov W' - I||_F; zero up to roundoff by construction."""
        p = self.w.shape[0]
        return float(np.linalg.norm(self.w @ self.blockcov.average @ self.w.T - np.eye(p)))


def nss_jd(x: SeriesMatrix | np.ndarray, s: int, jd_opts: JdOptions | None = None) -> UnmixingEstimate:
    """Whiten with the average block covariance, then jointly diagonalize.

    Returns W = U cov^{-1/2}. Rows come out in the order the Jacobi sweeps
    leave them unless ``order_by_nonstationarity`` is set, in which case
    they are sorted by decreasing variance of the block variances.
    """
    jd_opts = jd_opts or JdOptions()
    bc = block_covariances(x, s)
    if bc.n_blocks < 2:
        raise ValueError("at least 2 blocks required for separation")
    n = inv_sqrt_spd(bc.average)
    whitened = np.einsum("ab,kbc,cd->kad", n, bc.per_block, n)
    whitened = 0.5 * (whitened + np.transpose(whitened, (0, 2, 1)))
    jd = joint_diagonalize(whitened, tol=jd_opts.tol, max_sweeps=jd_opts.max_sweeps)
    u = jd.u
    if jd_opts.order_by_nonstationarity:
        diag = np.einsum("ia,kab,ib->ki", u, whitened, u)
        u = u[np.argsort(-diag.var(axis=0), kind="stable")]
    return UnmixingEstimate(w=u @ n, u=u, whitener=n, blockcov=bc, jd=jd)


def recover_sources(est: UnmixingEstimate, x: SeriesMatrix | np.ndarray) -> SeriesMatrix:
    values = x.values if isinstance(x, SeriesMatrix) else np.asarray(x, dtype=float)
    if values.shape[1] != est.w.shape[1]:
        raise ValueError(
            f"dimension mismatch: series has {values.shape[1]} columns, W is {est.w.shape}"
        )
    return SeriesMatrix(values @ est.w.T)
