"""Experiment grid: simulated vs theoretical adapted MDI over (model, T, s).

Random streams
--------------
With ``root = RngStream(seed, i)``:

* i = 0: repetition r of cell c uses ``root.child(c).child(r)``
* i = 1: the limiting-covariance Monte Carlo of theory key t uses ``root.child(t)``
* i = 2: unit-covariance calibration of theory key t uses ``root.child(t)``
* i = 3: the M4 coefficient draw

Cells are enumerated model-major, then T, then s. Theory keys are the
distinct (model, s, K) triples in first-appearance order. Results do not
depend on the worker count because every draw comes from its own stream and
rows are assembled in grid order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .asymptotics import sigma_w_z
from .data import RngStream, fmt, load_matrix_csv
from .estimator import nss_jd
from .mdi import mdi_report
from .models import MODEL_IDS, ModelSpec, calibrate_unit_covariance, make_model, simulate

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "model",
    "T",
    "s",
    "K",
    "mean_adapted_mdi",
    "se_adapted_mdi",
    "theory_adapted_mdi",
    "theory_se",
    "seconds",
)
THEORY_MODES = ("offdiag", "trace", "literal")

STREAM_REPS = 0
STREAM_THEORY = 1
STREAM_CALIBRATION = 2
STREAM_COEFFS = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid definition. ``mc_reps = 0`` skips the theoretical curves.

    ``theory_mode`` selects which entries of the limiting covariance are
    summed (see :func:`nssjd.asymptotics.expected_adapted_mdi`). ``trace``
    includes the diagonal positions, which the signed-permutation MDI also
    penalizes. ``record_timing`` fills the ``seconds`` column; it is off by
    default so reruns are byte-identical.
    """

    models: tuple = ("M1",)
    t_grid: tuple = (1000, 4000)
    s_grid: tuple = (10, 100)
    reps: int = 500
    mc_reps: int = 20_000
    seed: int = 0
    mixing: str = "identity"
    out_dir: str = "results"
    theory_mode: str = "trace"
    record_timing: bool = False
    calibration_layouts: int = 10_000

    def __post_init__(self):
        for name in ("models", "t_grid", "s_grid"):
            val = getattr(self, name)
            if isinstance(val, (str, int)):
                val = (val,)
            object.__setattr__(self, name, tuple(val))
        object.__setattr__(self, "t_grid", tuple(int(t) for t in self.t_grid))
        object.__setattr__(self, "s_grid", tuple(int(s) for s in self.s_grid))
        self.validate()

    def validate(self) -> None:
        if not self.models or not self.t_grid or not self.s_grid:
            raise ConfigError("models, t_grid and s_grid must be non-empty")
        bad = [m for m in self.models if m not in MODEL_IDS or m == "custom"]
        if bad:
            raise ConfigError(f"unknown models {bad}; choose from M1, M2, M3, M4")
        if int(self.reps) < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if min(self.s_grid) < 2:
            raise ConfigError("every block length must be >= 2")
        smax = max(self.s_grid)
        short = [t for t in self.t_grid if t < 2 * smax]
        if short:
            raise ConfigError(f"every T must be >= 2 * max(s_grid) = {2 * smax}; offending {short}")
        if self.mc_reps != 0 and self.mc_reps < 200:
            raise ConfigError("mc_reps must be 0 (no theory) or >= 200")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.theory_mode not in THEORY_MODES:
            raise ConfigError(f"theory_mode must be one of {THEORY_MODES}")
        if self.calibration_layouts < 1:
            raise ConfigError("calibration_layouts must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("models", "t_grid", "s_grid"):
            d[k] = list(d[k])
        return d

    def cells(self) -> list[tuple[str, int, int]]:
        return [(m, t, s) for m in self.models for t in self.t_grid for s in self.s_grid]


def load_mixing(mixing: str, p: int) -> np.ndarray:
    if mixing == "identity":
        return np.eye(p)
    a = load_matrix_csv(mixing)
    if a.shape != (p, p):
        raise ConfigError(f"mixing matrix must be {p} x {p}, got {a.shape}")
    if np.linalg.cond(a) > 1e12:
        raise ConfigError("mixing matrix is numerically singular")
    return a


def one_rep(model: ModelSpec, t_len: int, s: int, a: np.ndarray, stream: RngStream) -> float:
    """Adapted MDI of one simulated data set."""
    z, _ = simulate(model, t_len, stream)
    est = nss_jd(z @ a.T, s)
    return mdi_report(est.w, a, est.blockcov.n_blocks).adapted


@dataclass
class CellResult:
    model: str
    t_len: int
    s: int
    k: int
    mean: float = math.nan
    se: float = math.nan
    theory: float = math.nan
    theory_se: float = math.nan
    seconds: float | None = None
    errors: list = field(default_factory=list)

    def csv_row(self) -> str:
        sec = "" if self.seconds is None else f"{self.seconds:.3f}"
        vals = [self.model, str(self.t_len), str(self.s), str(self.k)]
        vals += [fmt(v) for v in (self.mean, self.se, self.theory, self.theory_se)]
        return ",".join(vals + [sec])


def _model_for(name: str, seed: int) -> ModelSpec:
    return make_model(name, coeff_seed=RngStream(seed, STREAM_COEFFS))


def run_experiment(cfg: ExperimentConfig, n_jobs: int = 1) -> tuple[list[CellResult], dict]:
    """Run the grid; returns the rows and the manifest dictionary."""
    seed = int(cfg.seed)
    base_models = {m: _model_for(m, seed) for m in cfg.models}
    p = base_models[cfg.models[0]].p
    a = load_mixing(cfg.mixing, p)

    theory_keys: list[tuple[str, int, int]] = []
    for m, t, s in cfg.cells():
        key = (m, s, t // s)
        if key not in theory_keys:
            theory_keys.append(key)

    calibrated: dict = {}
    theory: dict = {}
    for ti, (m, s, k) in enumerate(theory_keys):
        model = calibrate_unit_covariance(
            base_models[m],
            k,
            s,
            rng=RngStream(seed, STREAM_CALIBRATION).child(ti),
            n_layouts=cfg.calibration_layouts,
        )
        calibrated[(m, s, k)] = model
        if cfg.mc_reps == 0:
            continue
        try:
            # the MDI only sees W A, which does not depend on A, so Sigma_W_Z is the right input
            cov = sigma_w_z(model, k, s, RngStream(seed, STREAM_THEORY).child(ti), cfg.mc_reps, n_jobs)
            theory[(m, s, k)] = cov.expected_adapted_mdi(mode=cfg.theory_mode)
        except ArithmeticError as exc:
            log.warning("theory failed for %s s=%d K=%d: %s", m, s, k, exc)
            theory[(m, s, k)] = exc

    rows = []
    rep_root = RngStream(seed, STREAM_REPS)
    for ci, (m, t, s) in enumerate(cfg.cells()):
        k = t // s
        model = calibrated[(m, s, k)]
        row = CellResult(m, t, s, k)
        tic = time.perf_counter()
        cell_stream = rep_root.child(ci)
        streams = [cell_stream.child(r) for r in range(int(cfg.reps))]
        try:
            if n_jobs == 1:
                vals = [one_rep(model, t, s, a, st) for st in streams]
            else:
                vals = Parallel(n_jobs=n_jobs)(delayed(one_rep)(model, t, s, a, st) for st in streams)
            vals = np.asarray(vals)
            row.mean = float(vals.mean())
            row.se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s T=%d s=%d failed: %s", m, t, s, exc)
            row.errors.append(f"simulation: {exc}")
        th = theory.get((m, s, k))
        if isinstance(th, Exception):
            row.errors.append(f"theory: {th}")
        elif th is not None:
            row.theory, row.theory_se = th
        if cfg.record_timing:
            row.seconds = time.perf_counter() - tic
        rows.append(row)

    manifest = {
        "config": cfg.to_dict(),
        "n_jobs_note": "results do not depend on the worker count",
        "columns": list(RESULT_COLUMNS),
        "streams": {
            "repetitions": "RngStream(seed, 0).child(cell).child(rep)",
            "theory": "RngStream(seed, 1).child(theory_key)",
            "calibration": "RngStream(seed, 2).child(theory_key)",
            "m4_coefficients": "RngStream(seed, 3)",
        },
        "theory": {
            "keyed_by": "(model, s, K); M1/M2 layouts are resampled in every Monte Carlo replicate",
            "mode": cfg.theory_mode,
            "split_sample": "first half of replicates for expectation terms, second half for covariances",
        },
        "mixing": a.tolist(),
        "models": [
            {"model": m, "s": s, "K": k, "spec": calibrated[(m, s, k)].to_dict()}
            for (m, s, k) in theory_keys
        ],
        "failures": [
            {"model": r.model, "T": r.t_len, "s": r.s, "errors": r.errors} for r in rows if r.errors
        ],
    }
    return rows, manifest


def write_results(rows: list[CellResult], path) -> None:
    lines = [",".join(RESULT_COLUMNS)] + [r.csv_row() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
