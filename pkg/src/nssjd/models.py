"""Latent source models with time-varying variance, and their block moments.

Four reference models are provided (``M1`` .. ``M4``, p = 3):

* ``M1``  independent Gaussian observations; the series is cut into
  consecutive segments whose lengths are NB(6, 1/20) draws (failures
  convention, mean 114) shared by all components. Segment ``j`` of component
  ``k`` has variance ``variance_patterns[k][j % 3]``.
* ``M2``  as ``M1`` but every component draws its own segment lengths.
* ``M3``  Gaussian MA(4)/MA(3)/MA(3) processes; innovation variances follow
  the ``M1`` pattern over three equal thirds of the series.
* ``M4``  as ``M3`` with MA(40)/MA(50)/MA(60) coefficients drawn once from
  U(-1, 1) with a dedicated stream.

A ``custom`` model mixes the same ingredients freely.

Layouts
-------
A *layout* is a (T, p) array of base variances: the observation variance of
an iid model, or the variance of the innovation entering at time t of an MA
model. Warm-up innovations before t = 1 take the first segment's variance.
Scale factors multiply the finished series.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import RngStream, SeriesMatrix

PAPER_VARIANCES = ((1.0, 2.0, 3.0), (3.0, 1.0, 5.0), (4.0, 7.0, 1.0))
M3_COEFFS = ((0.9, -0.8, 0.3, -0.5), (0.8, 0.2, 0.3), (-0.6, 0.7, 0.1))
M4_ORDERS = (40, 50, 60)
NB_SIZE = 6
NB_PROB = 1.0 / 20.0

LAYOUTS = ("nb_shared", "nb_independent", "equal_segments")
MODEL_IDS = ("M1", "M2", "M3", "M4", "custom")


class InvalidModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    p: int
    variance_patterns: tuple
    layout: str = "nb_shared"
    nb_size: float = NB_SIZE
    nb_prob: float = NB_PROB
    ma_coeffs: tuple | None = None
    n_variance_blocks: int = 3
    scale_factors: tuple | None = None
    coeff_seed: RngStream | None = None

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise InvalidModelError(f"unknown model id {self.model_id!r}")
        if self.layout not in LAYOUTS:
            raise InvalidModelError(f"unknown layout {self.layout!r}")
        pats = tuple(tuple(float(v) for v in pat) for pat in self.variance_patterns)
        object.__setattr__(self, "variance_patterns", pats)
        if len(pats) != self.p or self.p < 1:
            raise InvalidModelError("need one variance pattern per component")
        for pat in pats:
            if not pat or not all(math.isfinite(v) and v > 0 for v in pat):
                raise InvalidModelError("variances must be finite and positive")
        if self.scale_factors is None:
            object.__setattr__(self, "scale_factors", (1.0,) * self.p)
        scales = tuple(float(c) for c in self.scale_factors)
        object.__setattr__(self, "scale_factors", scales)
        if len(scales) != self.p or not all(math.isfinite(c) and c > 0 for c in scales):
            raise InvalidModelError("scale factors must be p positive reals")
        if self.ma_coeffs is not None:
            coeffs = tuple(tuple(float(c) for c in cs) for cs in self.ma_coeffs)
            if len(coeffs) != self.p or not all(math.isfinite(c) for cs in coeffs for c in cs):
                raise InvalidModelError("need one finite coefficient list per component")
            object.__setattr__(self, "ma_coeffs", coeffs)
        if self.model_id == "M3" and tuple(map(len, self.ma_coeffs or ())) != (4, 3, 3):
            raise InvalidModelError("M3 coefficient lists must have lengths 4/3/3")
        if self.model_id == "M4" and tuple(map(len, self.ma_coeffs or ())) != M4_ORDERS:
            raise InvalidModelError("M4 coefficient lists must have lengths 40/50/60")
        if self.layout.startswith("nb") and not (self.nb_size > 0 and 0 < self.nb_prob <= 1):
            raise InvalidModelError("invalid negative binomial parameters")
        if self.n_variance_blocks < 1:
            raise InvalidModelError("n_variance_blocks must be >= 1")

    @property
    def random_layout(self) -> bool:
        return self.layout != "equal_segments"

    @property
    def ma_orders(self) -> tuple:
        if self.ma_coeffs is None:
            return (0,) * self.p
        return tuple(len(c) for c in self.ma_coeffs)

    def thetas(self) -> list[np.ndarray]:
        """Full MA filters including the leading 1 on the current innovation."""
        if self.ma_coeffs is None:
            return [np.ones(1) for _ in range(self.p)]
        return [np.concatenate([[1.0], c]) for c in self.ma_coeffs]

    def with_scales(self, scales) -> "ModelSpec":
        return replace(self, scale_factors=tuple(float(c) for c in scales))

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "p": self.p,
            "variance_patterns": [list(v) for v in self.variance_patterns],
            "layout": self.layout,
            "nb_size": self.nb_size,
            "nb_prob": self.nb_prob,
            "ma_coeffs": None if self.ma_coeffs is None else [list(c) for c in self.ma_coeffs],
            "n_variance_blocks": self.n_variance_blocks,
            "scale_factors": list(self.scale_factors),
            "coeff_seed": None if self.coeff_seed is None else self.coeff_seed.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if d.get("coeff_seed") is not None:
            d["coeff_seed"] = RngStream.from_dict(d["coeff_seed"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def model1() -> ModelSpec:
    return ModelSpec("M1", 3, PAPER_VARIANCES, layout="nb_shared")


def model2() -> ModelSpec:
    return ModelSpec("M2", 3, PAPER_VARIANCES, layout="nb_independent")


def model3() -> ModelSpec:
    return ModelSpec("M3", 3, PAPER_VARIANCES, layout="equal_segments", ma_coeffs=M3_COEFFS)


def m4_coefficients(coeff_seed: RngStream) -> tuple:
    gen = coeff_seed.generator()
    return tuple(tuple(gen.uniform(-1.0, 1.0, size=q)) for q in M4_ORDERS)


def model4(coeff_seed: RngStream | None = None) -> ModelSpec:
    coeff_seed = coeff_seed or RngStream(4)
    return ModelSpec(
        "M4",
        3,
        PAPER_VARIANCES,
        layout="equal_segments",
        ma_coeffs=m4_coefficients(coeff_seed),
        coeff_seed=coeff_seed,
    )


def make_model(name: str, coeff_seed: RngStream | None = None) -> ModelSpec:
    factories = {"M1": model1, "M2": model2, "M3": model3}
    if name == "M4":
        return model4(coeff_seed)
    if name not in factories:
        raise InvalidModelError(f"unknown model {name!r}; choose from M1, M2, M3, M4")
    return factories[name]()


# ---------------------------------------------------------------- layouts

def nb_segment_lengths(model: ModelSpec, t_len: int, gen: np.random.Generator) -> np.ndarray:
    """Segment lengths covering ``t_len``; zero draws become length 1."""
    batch = max(16, 2 * t_len // 100)
    lengths = []
    covered = 0
    while covered < t_len:
        draw = np.maximum(gen.negative_binomial(model.nb_size, model.nb_prob, size=batch), 1)
        lengths.append(draw)
        covered += int(draw.sum())
    lengths = np.concatenate(lengths)
    ends = np.cumsum(lengths)
    n = int(np.searchsorted(ends, t_len)) + 1
    return lengths[:n]


def _pattern_from_lengths(pattern, lengths: np.ndarray, t_len: int) -> np.ndarray:
    phases = np.arange(len(lengths)) % len(pattern)
    return np.repeat(np.asarray(pattern)[phases], lengths)[:t_len]


def segment_index(t_len: int, n_segments: int) -> np.ndarray:
    """Equal-size segment label of each time point 0..T-1."""
    return np.minimum((np.arange(t_len) * n_segments) // t_len, n_segments - 1)


def draw_layout(model: ModelSpec, t_len: int, gen: np.random.Generator | None = None) -> np.ndarray:
    """(t_len, p) base-variance layout (unscaled)."""
    out = np.empty((t_len, model.p))
    if model.layout == "equal_segments":
        seg = segment_index(t_len, model.n_variance_blocks)
        for k, pat in enumerate(model.variance_patterns):
            out[:, k] = np.asarray(pat)[seg % len(pat)]
        return out
    if gen is None:
        raise InvalidModelError(f"model {model.model_id} has a random layout; a generator is needed")
    if model.layout == "nb_shared":
        lengths = nb_segment_lengths(model, t_len, gen)
        for k, pat in enumerate(model.variance_patterns):
            out[:, k] = _pattern_from_lengths(pat, lengths, t_len)
    else:
        for k, pat in enumerate(model.variance_patterns):
            lengths = nb_segment_lengths(model, t_len, gen)
            out[:, k] = _pattern_from_lengths(pat, lengths, t_len)
    return out


# -------------------------------------------------------------- generation

def simulate(model: ModelSpec, t_len: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Draw one series; returns (values (T, p), layout (T, p))."""
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    gen = rng.generator()
    layout = draw_layout(model, t_len, gen)
    qmax = max(model.ma_orders)
    eps = gen.standard_normal((t_len + qmax, model.p))
    values = np.empty((t_len, model.p))
    for k, theta in enumerate(model.thetas()):
        q = len(theta) - 1
        var = np.concatenate([np.full(q, layout[0, k]), layout[:, k]])
        innov = eps[qmax - q :, k] * np.sqrt(var)
        z = np.convolve(innov, theta, mode="valid") if q else innov
        values[:, k] = model.scale_factors[k] * z
    return values, layout


def generate(model: ModelSpec, t_len: int, rng: RngStream) -> SeriesMatrix:
    return SeriesMatrix(simulate(model, t_len, rng)[0])


# ------------------------------------------------------ population moments

@dataclass(frozen=True, eq=False)
class PopulationMoments:
    """Block moments of the (block-centred) sources.

    c      (K, p)        diagonal of cov_{Z,i}
    gram   (K, p, p)     gram[i, e, f] = s^-2 sum_{a,b} D_i^{(a,b)}[e] D_i^{(a,b)}[f]
    d      (K, s, s, p)  diagonal of D_{Z,i}^{(a,b)}, or None when not requested
    """

    c: np.ndarray
    gram: np.ndarray
    s: int
    d: np.ndarray | None = None

    @property
    def n_blocks(self) -> int:
        return self.c.shape[0]

    def c_matrices(self) -> list[np.ndarray]:
        return [np.diag(ci) for ci in self.c]


def _centre(gamma: np.ndarray) -> np.ndarray:
    """P G P with P = I - 11'/s, over the last two axes."""
    g = gamma - gamma.mean(axis=-1, keepdims=True)
    return g - g.mean(axis=-2, keepdims=True)


def _ma_block_gammas(theta: np.ndarray, var_ext: np.ndarray, k: int, s: int) -> np.ndarray:
    """Uncentred covariance of each block of an MA series, shape (K, s, s).

    ``var_ext[q + t]`` is the innovation variance at time t (t = -q .. T-1).
    Blocks with identical variance windows share one computation.
    """
    q = len(theta) - 1
    big = np.zeros((s, s + q))
    for a in range(s):
        big[a, a : a + q + 1] = theta[::-1]
    out = np.empty((k, s, s))
    cache = {}
    for i in range(k):
        window = var_ext[i * s : i * s + s + q]
        key = window.tobytes()
        if key not in cache:
            cache[key] = (big * window) @ big.T
        out[i] = cache[key]
    return out


def population_block_moments(
    model: ModelSpec, k: int, s: int, layout: np.ndarray | None = None, full: bool = True
) -> PopulationMoments:
    """Population block moments for the first K blocks of length s.

    Random-layout models need the realized ``layout`` (T >= K s rows).
    """
    if k < 1 or s < 1:
        raise ValueError("K and s must be >= 1")
    t_len = k * s
    if layout is None:
        if model.random_layout:
            raise InvalidModelError(
                f"model {model.model_id} has random segment lengths; pass the realized layout"
            )
        layout = draw_layout(model, t_len)
    layout = np.asarray(layout, dtype=float)
    if layout.shape[0] < t_len or layout.shape[1] != model.p:
        raise ValueError(f"layout must have shape (>= {t_len}, {model.p})")
    scales2 = np.asarray(model.scale_factors) ** 2
    p = model.p
    if model.ma_coeffs is None:
        v = layout[:t_len].reshape(k, s, p) * scales2
        sums = v.sum(axis=1)
        c = sums / s * (1.0 - 1.0 / s)
        gram = (
            np.matmul(v.transpose(0, 2, 1), v) * (1.0 - 2.0 / s)
            + sums[:, :, None] * sums[:, None, :] / s**2
        ) / s**2
        d = None
        if full:
            eye = np.eye(s)
            d = np.empty((k, s, s, p))
            for j in range(p):
                d[..., j] = _centre(eye[None] * v[:, None, :, j])
        return PopulationMoments(c=c, gram=gram, s=s, d=d)

    gammas = []
    for j, theta in enumerate(model.thetas()):
        q = len(theta) - 1
        var_ext = np.concatenate([np.full(q, layout[0, j]), layout[:t_len, j]])
        gammas.append(_centre(_ma_block_gammas(theta, var_ext, k, s)) * scales2[j])
    dstack = np.stack(gammas, axis=-1)  # (K, s, s, p)
    c = np.einsum("kaap->kp", dstack) / s
    gram = np.einsum("kabe,kabf->kef", dstack, dstack) / s**2
    return PopulationMoments(c=c, gram=gram, s=s, d=dstack if full else None)


def expected_average_covariance(
    model: ModelSpec, k: int, s: int, rng: RngStream | None = None, n_layouts: int = 10_000
) -> np.ndarray:
    """Diagonal of the population average block covariance, averaged over layouts.

    Deterministic layouts are evaluated exactly; random ones by Monte Carlo
    over ``n_layouts`` layout draws.
    """
    if not model.random_layout:
        return population_block_moments(model, k, s, full=False).c.mean(axis=0)
    rng = rng or RngStream(0x5CA1E)
    gen = rng.generator()
    acc = np.zeros(model.p)
    for _ in range(n_layouts):
        layout = draw_layout(model, k * s, gen)
        acc += population_block_moments(model, k, s, layout=layout, full=False).c.mean(axis=0)
    return acc / n_layouts


def calibrate_unit_covariance(
    model: ModelSpec, k: int, s: int, rng: RngStream | None = None, n_layouts: int = 10_000
) -> ModelSpec:
    """Rescale components so the average block covariance is the identity."""
    base = model.with_scales((1.0,) * model.p)
    avg = expected_average_covariance(base, k, s, rng=rng, n_layouts=n_layouts)
    return model.with_scales(1.0 / np.sqrt(avg))


# ----------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class ConditionReport:
    delta: float
    separable_fraction: float
    min_variance: float
    max_variance: float
    min_gap: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "separable_fraction": self.separable_fraction,
            "min_variance": self.min_variance,
            "max_variance": self.max_variance,
            "min_gap": self.min_gap,
        }


def check_conditions(moments: PopulationMoments, delta: float) -> ConditionReport:
    """Finite-sample surrogates for source separability and bounded variance.

    A block counts as separable when all its pairwise variance gaps and all
    its variances are at least ``delta``.
    """
    c = moments.c
    p = c.shape[1]
    if p > 1:
        gaps = np.abs(c[:, :, None] - c[:, None, :])
        gaps = gaps + np.where(np.eye(p, dtype=bool), np.inf, 0.0)
        block_gap = gaps.reshape(len(c), -1).min(axis=1)
    else:
        block_gap = np.full(len(c), np.inf)
    ok = (block_gap >= delta) & (c.min(axis=1) >= delta)
    return ConditionReport(
        delta=float(delta),
        separable_fraction=float(ok.mean()),
        min_variance=float(c.min()),
        max_variance=float(c.max()),
        min_gap=float(block_gap.min()),
    )
