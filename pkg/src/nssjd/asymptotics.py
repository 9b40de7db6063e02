"""Monte Carlo evaluation of the limiting covariance of the NSS-JD estimator.

Conventions
-----------
* p x p matrices are vectorized row-major: entry (e, f) sits at ``e * p + f``
  (zero based). Every p^2 x p^2 matrix below uses this layout.
* Pairs e < f are enumerated lexicographically, ``(0,1), (0,2), ..., (p-2,p-1)``.

The estimator is asymptotically linear in two statistics of the latent
block covariances ``C_i``:

    sqrt(K) (G W - I) ~= S(H^-1 [sqrt(K) grad]) - 1/2 sqrt(K) (mean_i C_i - I)

``grad`` is the linearized gradient :func:`bar_nabla0`, ``H`` the Hessian
scale of :func:`compute_h` and ``S`` the skew-symmetric embedding. The
limiting covariance is estimated by simulating this influence vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .blockcov import block_matrices
from .data import RngStream, child_stream
from .models import ModelSpec, PopulationMoments, population_block_moments, simulate

MIN_MC = 100


class SeparabilityError(ArithmeticError):
    pass


# ------------------------------------------------------------ index maps

def pairs(p: int) -> list[tuple[int, int]]:
    return [(e, f) for e in range(p) for f in range(e + 1, p)]


def pair_flat(e: int, f: int, p: int) -> int:
    if not 0 <= e < f < p:
        raise IndexError("pair index needs 0 <= e < f < p")
    return e * p - e * (e + 1) // 2 + (f - e - 1)


def pair_unflat(k: int, p: int) -> tuple[int, int]:
    if not 0 <= k < p * (p - 1) // 2:
        raise IndexError("flat pair index out of range")
    e = 0
    while k >= p - 1 - e:
        k -= p - 1 - e
        e += 1
    return e, e + 1 + k


def skew_embed(v: np.ndarray, p: int) -> np.ndarray:
    """S(V): upper triangle V, lower triangle -V, zero diagonal. Batched over leading axes."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (p, p))
    iu = np.triu_indices(p, 1)
    out[..., iu[0], iu[1]] = v
    out[..., iu[1], iu[0]] = -v
    return out


# ---------------------------------------------------- replicate statistics

def block_products(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block averages of the products entering the gradient.

    q1[j, k, :] = mean_i C_i e_k e_k' C_i e_j
    q2[j, k, :] = mean_i C_i e_j e_k' C_i e_k
    q3[k, :]    = mean_i e_k' C_i e_k e_k' C_i
    """
    kb = c.shape[0]
    q1 = np.einsum("ilk,ikj->jkl", c, c) / kb
    q2 = np.einsum("ilj,ikk->jkl", c, c) / kb
    q3 = np.einsum("ikk,ikm->km", c, c) / kb
    return q1, q2, q3


@dataclass(frozen=True, eq=False)
class ETerms:
    """Expectations (1/K) sum_i E[...] appearing in the gradient, with MC errors.

    e1[j, k] = E[Q_{kk} e_j], e2[j, k] = E[Q_{jk} e_k], e3[k] = E[e_k' Q_{kk}],
    where Q_{jk} = C e_j e_k' C.
    """

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    se1: np.ndarray
    se2: np.ndarray
    se3: np.ndarray
    n_mc: int

    @classmethod
    def from_samples(cls, q1, q2, q3) -> "ETerms":
        n = q1.shape[0]

        def se(x):
            return x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(x.shape[1:], np.nan)

        return cls(q1.mean(0), q2.mean(0), q3.mean(0), se(q1), se(q2), se(q3), n)


def _nabla(q1_hat: np.ndarray, covbar: np.ndarray, et: ETerms) -> np.ndarray:
    """Vectorized gradient; leading axes of ``q1_hat``/``covbar`` are replicates."""
    p = covbar.shape[-1]
    t = -0.5 * (covbar - np.eye(p))
    out = []
    for j, k in pairs(p):
        val = (
            -4.0 * q1_hat[..., j, k, k]
            - 8.0 * t[..., k, :] @ et.e1[j, k]
            - 4.0 * t[..., k, :] @ et.e2[j, k]
            - 4.0 * t[..., :, j] @ et.e3[k]
            + 4.0 * q1_hat[..., k, j, j]
            + 8.0 * t[..., j, :] @ et.e1[k, j]
            + 4.0 * t[..., j, :] @ et.e2[k, j]
            + 4.0 * t[..., :, k] @ et.e3[j]
        )
        out.append(val)
    return np.stack(out, axis=-1) if out else np.zeros(covbar.shape[:-2] + (0,))


def bar_nabla0(blockcovs, expectations: ETerms, covbar) -> np.ndarray:
    """Linearized gradient at the identity, one entry per pair j < k."""
    c = np.asarray(blockcovs, dtype=float)
    covbar = np.asarray(covbar, dtype=float)
    p = covbar.shape[0]
    if c.ndim != 3 or c.shape[1:] != (p, p) or expectations.e1.shape != (p, p, p):
        raise ValueError("dimension mismatch between block covariances, covbar and E-terms")
    q1, _, _ = block_products(c)
    return _nabla(q1, covbar, expectations)


# ---------------------------------------------------------------- Hessian

def compute_h(moments: PopulationMoments, tol: float = 1e-10) -> np.ndarray:
    """Symmetric p x p table of H_{e,f} (diagonal left at zero).

    H_{e,f} = 4 mean_i (c_ie - c_if)^2
              + 8 mean_i s^-2 sum_{m,n} (D_i^{(m,n)}[e] - D_i^{(m,n)}[f])^2
    """
    c = moments.c
    g = moments.gram
    p = c.shape[1]
    h = np.zeros((p, p))
    for e in range(p):
        for f in range(p):
            if e == f:
                continue
            first = 4.0 * np.mean((c[:, e] - c[:, f]) ** 2)
            second = 8.0 * np.mean(g[:, e, e] + g[:, f, f] - 2.0 * g[:, e, f])
            h[e, f] = first + second
    off = h[~np.eye(p, dtype=bool)]
    if off.size and off.min() <= tol:
        e, f = np.argwhere((h <= tol) & ~np.eye(p, dtype=bool))[0]
        raise SeparabilityError(
            f"components {e} and {f} are not separable: H = {h[e, f]:.3e}"
        )
    return h


# -------------------------------------------------- covariance assembly

def sigma_u(sigma_nabla: np.ndarray, h: np.ndarray) -> np.ndarray:
    """p^2 x p^2 covariance of sqrt(K)(G U - I) from the gradient covariance."""
    p = h.shape[0]
    sn = np.asarray(sigma_nabla, dtype=float)

    def nab(a, b, c, d):
        return sn[pair_flat(a, b, p), pair_flat(c, d, p)]

    out = np.zeros((p * p, p * p))
    for e in range(p):
        for f in range(p):
            for g in range(p):
                for hh in range(p):
                    if e == f or g == hh:
                        val = 0.0
                    elif e < f and g < hh:
                        val = nab(e, f, g, hh)
                    elif e < f and g > hh:
                        val = -nab(e, f, hh, g)
                    elif e > f and g < hh:
                        val = -nab(f, e, g, hh)
                    else:
                        val = nab(f, e, hh, g)
                    if val:
                        val /= h[e, f] * h[g, hh]
                    out[e * p + f, g * p + hh] = val
    return out


def sigma_w_x(sigma_w_z_: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Covariance of vec(M A^-1) when vec(M) has covariance ``sigma_w_z_``."""
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    b = np.linalg.inv(a)
    lin = np.kron(np.eye(p), b.T)
    out = lin @ sigma_w_z_ @ lin.T
    return 0.5 * (out + out.T)


def expected_adapted_mdi(sigma: np.ndarray, mode: str = "offdiag") -> float:
    """Limiting mean of K (p-1) MDI^2 read off a p^2 x p^2 covariance.

    ``offdiag``  sum of variance entries at positions (e, f), e != f (default)
    ``trace``    sum of all variance entries, diagonal positions included
    ``literal``  sum of every off-diagonal element of the p^2 x p^2 matrix
    """
    sigma = np.asarray(sigma, dtype=float)
    p = math.isqrt(sigma.shape[0])
    var = np.diag(sigma)
    if mode == "offdiag":
        keep = ~np.eye(p, dtype=bool).ravel()
        return float(var[keep].sum())
    if mode == "trace":
        return float(var.sum())
    if mode == "literal":
        return float(sigma.sum() - var.sum())
    raise ValueError(f"unknown mode {mode!r}")


# ----------------------------------------------------------- Monte Carlo

def _one_replicate(model: ModelSpec, k: int, s: int, stream: RngStream, need_h: bool):
    values, layout = simulate(model, k * s, stream)
    c = block_matrices(values, s)
    q1, q2, q3 = block_products(c)
    covbar = c.mean(axis=0)
    h = None
    if need_h:
        h = compute_h(population_block_moments(model, k, s, layout=layout, full=False), tol=-np.inf)
    return q1, q2, q3, covbar, h


def _chunk(model, k, s, rng, idx, need_h):
    return [_one_replicate(model, k, s, child_stream(rng, i), need_h) for i in idx]


def replicate_statistics(
    model: ModelSpec, k: int, s: int, rng: RngStream, n: int, n_jobs: int = 1, need_h: bool = False
) -> dict:
    """Simulate ``n`` replicates (stream ``child_stream(rng, r)`` for replicate r)."""
    idx = np.arange(n)
    if n_jobs == 1:
        rows = _chunk(model, k, s, rng, idx, need_h)
    else:
        chunks = np.array_split(idx, max(1, 4 * abs(n_jobs)))
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_chunk)(model, k, s, rng, ch, need_h) for ch in chunks if len(ch)
        )
        rows = [r for part in parts for r in part]
    out = {
        "q1": np.stack([r[0] for r in rows]),
        "q2": np.stack([r[1] for r in rows]),
        "q3": np.stack([r[2] for r in rows]),
        "covbar": np.stack([r[3] for r in rows]),
    }
    if need_h:
        out["h"] = np.stack([r[4] for r in rows])
    return out


def expectation_terms(
    model: ModelSpec, k: int, s: int, rng: RngStream, n_mc: int, n_jobs: int = 1
) -> ETerms:
    if n_mc < MIN_MC:
        raise ValueError(f"n_mc must be >= {MIN_MC} for meaningful standard errors")
    st = replicate_statistics(model, k, s, rng, n_mc, n_jobs=n_jobs)
    return ETerms.from_samples(st["q1"], st["q2"], st["q3"])


def isserlis_eterms(moments: PopulationMoments) -> ETerms:
    """Closed-form E-terms for independent Gaussian sources (fourth-moment identity)."""
    c = moments.c
    g = moments.gram
    kb, p = c.shape
    e1 = np.zeros((p, p, p))
    e2 = np.zeros((p, p, p))
    e3 = np.zeros((p, p))
    for j in range(p):
        for kk in range(p):
            for l in range(p):
                e1[j, kk, l] = np.mean(product_moment(c, g, l, kk, kk, j))
                e2[j, kk, l] = np.mean(product_moment(c, g, l, j, kk, kk))
            e3[kk, j] = np.mean(product_moment(c, g, kk, kk, kk, j))
    zero = np.zeros_like
    return ETerms(e1, e2, e3, zero(e1), zero(e2), zero(e3), 0)


def product_moment(c: np.ndarray, g: np.ndarray, l1: int, m1: int, l2: int, m2: int) -> np.ndarray:
    """E[C_{l1 m1} C_{l2 m2}] per block, for independent Gaussian components.

    c (K, p) block variances, g (K, p, p) the gram summary of the centred
    cross-moments.
    """
    cov = lambda a, b: c[:, a] if a == b else np.zeros(c.shape[0])  # noqa: E731
    out = cov(l1, m1) * cov(l2, m2)
    if l1 == l2 and m1 == m2:
        out = out + g[:, l1, m1]
    if l1 == m2 and m1 == l2:
        out = out + g[:, l1, m1]
    return out


def _cov(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    y = x if y is None else y
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    return xc.T @ yc / (n - 1)


def _cov_se(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    prod = xc[:, :, None] * xc[:, None, :]
    return prod.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass(frozen=True, eq=False)
class AsymptoticCov:
    """Monte Carlo estimate of the limiting covariance and its pieces.

    ``sigma_w_z`` is the direct covariance of the simulated influence
    vectors and is the reported value; ``sigma_w_z_decomp`` is the sum
    sigma_u + sigma_covbar / 4 - sym(cross) and serves as a cross-check.
    """

    p: int
    k: int
    s: int
    sigma_nabla: np.ndarray
    h: np.ndarray
    sigma_u: np.ndarray
    sigma_covbar: np.ndarray
    sigma_cross: np.ndarray
    sigma_w_z: np.ndarray
    sigma_w_z_decomp: np.ndarray
    mc_se: np.ndarray
    influence: np.ndarray
    eterms: ETerms
    n_mc: int

    def sigma_w_x(self, a=None) -> np.ndarray:
        return self.sigma_w_z if a is None else sigma_w_x(self.sigma_w_z, a)

    def expected_adapted_mdi(self, a=None, mode: str = "offdiag") -> tuple[float, float]:
        """(value, Monte Carlo standard error)."""
        y = self.influence
        if a is not None:
            b = np.linalg.inv(np.asarray(a, dtype=float))
            y = (y.reshape(-1, self.p, self.p) @ b).reshape(len(y), -1)
        value = expected_adapted_mdi(_cov(y), mode=mode)
        n = len(y)
        yc = y - y.mean(axis=0)
        if mode == "offdiag":
            keep = ~np.eye(self.p, dtype=bool).ravel()
            per = np.sum(yc[:, keep] ** 2, axis=1)
        elif mode == "trace":
            per = np.sum(yc**2, axis=1)
        else:
            tot = yc.sum(axis=1)
            per = tot**2 - np.sum(yc**2, axis=1)
        return value, float(per.std(ddof=1) / math.sqrt(n))

    def to_dict(self) -> dict:
        theory, se = self.expected_adapted_mdi()
        return {
            "index_convention": {
                "quad": "row-major vec: entry (e, f) of a p x p matrix -> e * p + f (zero based)",
                "pair": "lexicographic pairs e < f",
            },
            "p": self.p,
            "K": self.k,
            "s": self.s,
            "n_mc": self.n_mc,
            "h": self.h.tolist(),
            "sigma_nabla": self.sigma_nabla.tolist(),
            "sigma_u": self.sigma_u.tolist(),
            "sigma_covbar": self.sigma_covbar.tolist(),
            "sigma_cross": self.sigma_cross.tolist(),
            "sigma_w_z": self.sigma_w_z.tolist(),
            "mc_se": self.mc_se.tolist(),
            "expected_adapted_mdi": theory,
            "expected_adapted_mdi_se": se,
        }


def sigma_w_z(
    model: ModelSpec,
    k: int,
    s: int,
    rng: RngStream,
    n_mc: int = 20_000,
    n_jobs: int = 1,
) -> AsymptoticCov:
    """Limiting covariance of sqrt(K)(G W_Z - I) by split-sample Monte Carlo.

    Replicates ``0 .. n/2 - 1`` estimate the E-terms (and, for random-layout
    models, the Hessian scale averaged over layouts); replicates
    ``n/2 .. n - 1`` supply the covariances.
    """
    if n_mc < 2 * MIN_MC:
        raise ValueError(f"n_mc must be >= {2 * MIN_MC} (two halves of at least {MIN_MC})")
    p = model.p
    st = replicate_statistics(model, k, s, rng, n_mc, n_jobs=n_jobs, need_h=model.random_layout)
    n1 = n_mc // 2
    first = slice(0, n1)
    second = slice(n1, n_mc)
    et = ETerms.from_samples(st["q1"][first], st["q2"][first], st["q3"][first])
    if model.random_layout:
        h = st["h"][first].mean(axis=0)
        if h[~np.eye(p, dtype=bool)].min() <= 1e-10:
            raise SeparabilityError("average Hessian scale is not positive")
    else:
        h = compute_h(population_block_moments(model, k, s, full=False))

    root_k = math.sqrt(k)
    grad = root_k * _nabla(st["q1"][second], st["covbar"][second], et)
    hinv = np.array([1.0 / h[e, f] for e, f in pairs(p)])
    a_part = skew_embed(grad * hinv, p).reshape(len(grad), -1)
    b_part = (root_k * (st["covbar"][second] - np.eye(p))).reshape(len(grad), -1)
    influence = a_part - 0.5 * b_part

    direct = _cov(influence)
    sig_nabla = _cov(grad)
    sig_u = sigma_u(sig_nabla, h)
    sig_cov = _cov(b_part)
    cross = _cov(a_part, b_part)
    sig_cross = 0.5 * (cross + cross.T)
    decomp = sig_u + 0.25 * sig_cov - sig_cross
    return AsymptoticCov(
        p=p,
        k=k,
        s=s,
        sigma_nabla=0.5 * (sig_nabla + sig_nabla.T),
        h=h,
        sigma_u=0.5 * (sig_u + sig_u.T),
        sigma_covbar=0.5 * (sig_cov + sig_cov.T),
        sigma_cross=sig_cross,
        sigma_w_z=0.5 * (direct + direct.T),
        sigma_w_z_decomp=0.5 * (decomp + decomp.T),
        mc_se=_cov_se(influence),
        influence=influence,
        eterms=et,
        n_mc=n_mc,
    )
