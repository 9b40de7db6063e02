"""Command line entry point.

Subcommands: ``simulate``, ``estimate``, ``mdi``, ``theory``, ``experiment``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure. Errors
are reported on stderr as one JSON object with ``error``, ``message`` and
``command`` keys. ``SEED`` in the environment overrides any seed given on
the command line or in a config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .asymptotics import SeparabilityError, sigma_w_z
from .data import RngStream, SeriesFormatError, SeriesMatrix, load_matrix_csv, load_series_csv
from .data import write_matrix_csv, write_series_csv
from .estimator import JdOptions, nss_jd, recover_sources
from .experiment import ConfigError, ExperimentConfig, run_experiment, write_results
from .mdi import mdi_report
from .models import InvalidModelError, calibrate_unit_covariance, make_model, simulate
from .symlinalg import DefinitenessError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("nssjd")


class UsageError(Exception):
    pass


def _seed(arg_seed) -> int:
    env = os.environ.get("SEED")
    if env is not None and env != "":
        try:
            return int(env, 0)
        except ValueError:
            raise UsageError(f"SEED environment variable is not an integer: {env!r}") from None
    return int(arg_seed)


def _versions() -> dict:
    out = {"numpy": np.__version__}
    try:
        out["package"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["package"] = "unknown"
    return out


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


# ------------------------------------------------------------ commands

def cmd_simulate(args) -> int:
    seed = _seed(args.seed)
    if args.t < 1:
        raise UsageError("--t must be >= 1")
    model = make_model(args.model, coeff_seed=RngStream(seed, 3))
    if args.calibrate:
        if args.s < 2 or args.t < args.s:
            raise UsageError("calibration needs 2 <= --s <= --t")
        model = calibrate_unit_covariance(
            model, args.t // args.s, args.s, rng=RngStream(seed, 2), n_layouts=args.calibration_layouts
        )
    z, _ = simulate(model, args.t, RngStream(seed, 0))
    a = np.eye(model.p) if args.mixing is None else load_matrix_csv(args.mixing)
    if a.shape != (model.p, model.p):
        raise UsageError(f"mixing matrix must be {model.p} x {model.p}")
    write_series_csv(SeriesMatrix(z @ a.T), args.out)
    manifest = {
        "command": "simulate",
        "seed": seed,
        "t_len": args.t,
        "streams": {"series": "RngStream(seed, 0)", "calibration": "RngStream(seed, 2)"},
        "calibration": {"s": args.s, "K": args.t // args.s} if args.calibrate else None,
        "model": model.to_dict(),
        "scale_factors": list(model.scale_factors),
        "ma_coeffs": None if model.ma_coeffs is None else [list(c) for c in model.ma_coeffs],
        "mixing": a.tolist(),
        "versions": _versions(),
    }
    _write_json(manifest, args.manifest or _manifest_path(args.out))
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.s < 2:
        raise UsageError(f"--s must be >= 2, got {args.s}")
    x = load_series_csv(args.input)
    if x.t_len < 2 * args.s:
        raise UsageError(f"need T >= 2 s; got T = {x.t_len}, s = {args.s}")
    opts = JdOptions(tol=args.tol, max_sweeps=args.max_sweeps, order_by_nonstationarity=args.order)
    est = nss_jd(x, args.s, opts)
    write_matrix_csv(est.w, args.out)
    if args.sources:
        write_series_csv(recover_sources(est, x), args.sources)
    diag = {
        "command": "estimate",
        "input": str(args.input),
        "T": x.t_len,
        "p": x.dim,
        "s": args.s,
        "K": est.blockcov.n_blocks,
        "dropped_tail": est.blockcov.n_dropped_tail,
        "whitening_residual": est.whitening_residual(),
        "jd_sweeps": est.jd.sweeps,
        "jd_converged": est.jd.converged,
        "jd_final_max_angle": est.jd.final_max_angle,
        "jd_objective": est.jd.objective,
        "block_psd_violation": est.blockcov.psd_violation(),
        "versions": _versions(),
    }
    _write_json(diag, args.diagnostics or _manifest_path(args.out))
    return EXIT_OK


def cmd_mdi(args) -> int:
    w = load_matrix_csv(args.w)
    a = np.eye(w.shape[0]) if args.a is None else load_matrix_csv(args.a)
    if a.shape != w.shape:
        raise UsageError(f"W is {w.shape} but A is {a.shape}")
    r = mdi_report(w, a, args.k)
    out = {
        "mdi": r.mdi,
        "adapted_mdi": r.adapted,
        "K": args.k,
        "perm": list(r.best_g.perm),
        "signs": list(r.best_g.signs),
    }
    print(json.dumps(out))
    return EXIT_OK


def cmd_theory(args) -> int:
    seed = _seed(args.seed)
    if args.s < 2 or args.t < 2 * args.s:
        raise UsageError("need --s >= 2 and --t >= 2 --s")
    k = args.t // args.s
    model = make_model(args.model, coeff_seed=RngStream(seed, 3))
    model = calibrate_unit_covariance(
        model, k, args.s, rng=RngStream(seed, 2), n_layouts=args.calibration_layouts
    )
    cov = sigma_w_z(model, k, args.s, RngStream(seed, 1), n_mc=args.mc_reps, n_jobs=args.threads)
    value, se = cov.expected_adapted_mdi(mode=args.mode)
    out = cov.to_dict()
    out.update(
        {
            "command": "theory",
            "seed": seed,
            "model": model.to_dict(),
            "mode": args.mode,
            "expected_adapted_mdi": value,
            "expected_adapted_mdi_se": se,
            "versions": _versions(),
        }
    )
    _write_json(out, args.out)
    print(json.dumps({"expected_adapted_mdi": value, "se": se, "K": k, "s": args.s}))
    return EXIT_OK


def cmd_experiment(args) -> int:
    raw = ExperimentConfig.from_json(args.config).to_dict()
    if os.environ.get("SEED"):
        raw["seed"] = _seed(raw["seed"])
    if args.out_dir:
        raw["out_dir"] = args.out_dir
    cfg = ExperimentConfig.from_dict(raw)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, manifest = run_experiment(cfg, n_jobs=args.threads)
    write_results(rows, out_dir / "results.csv")
    manifest["versions"] = _versions()
    _write_json(manifest, out_dir / "manifest.json")
    for r in rows:
        if r.errors:
            log.warning("row %s T=%d s=%d flagged: %s", r.model, r.t_len, r.s, "; ".join(r.errors))
    return EXIT_OK


# -------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nssjd", description="NSS-JD blind source separation tools")
    ap.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a series from one of the models")
    sp.add_argument("--model", required=True, help="M1, M2, M3 or M4")
    sp.add_argument("--t", type=int, required=True, help="series length")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="series.csv")
    sp.add_argument("--manifest", default=None, help="default: <out>.manifest.json")
    sp.add_argument("--s", type=int, default=100, help="block length used for unit-covariance scaling")
    sp.add_argument("--no-calibrate", dest="calibrate", action="store_false")
    sp.add_argument("--calibration-layouts", type=int, default=10_000)
    sp.add_argument("--mixing", default=None, help="p x p mixing matrix CSV (default identity)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate the unmixing matrix from a series CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--s", type=int, required=True, help="block length")
    sp.add_argument("--out", default="w.csv")
    sp.add_argument("--diagnostics", default=None, help="default: <out>.manifest.json")
    sp.add_argument("--sources", default=None, help="also write the recovered sources")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-sweeps", type=int, default=200)
    sp.add_argument("--order", action="store_true", help="sort rows by non-stationarity")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("mdi", help="minimum distance index of W against a mixing matrix")
    sp.add_argument("--w", required=True)
    sp.add_argument("--a", default=None, help="mixing matrix CSV (default identity)")
    sp.add_argument("--k", type=int, default=1, help="number of blocks for the adapted MDI")
    sp.set_defaults(func=cmd_mdi)

    sp = sub.add_parser("theory", help="Monte Carlo limiting covariance and expected adapted MDI")
    sp.add_argument("--model", required=True)
    sp.add_argument("--t", type=int, required=True)
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--mc-reps", type=int, default=20_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=("offdiag", "trace", "literal"), default="trace")
    sp.add_argument("--calibration-layouts", type=int, default=10_000)
    sp.add_argument("--out", default="theory.json")
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("experiment", help="run a simulation-vs-theory grid from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", default=None, help="overrides out_dir in the config")
    sp.set_defaults(func=cmd_experiment)
    return ap


def _fail(code: int, exc: BaseException, command) -> int:
    ctx = {"error": type(exc).__name__, "message": str(exc), "command": command, "exit_code": code}
    for attr in ("min_eig", "tol"):
        if hasattr(exc, attr):
            ctx[attr] = getattr(exc, attr)
    print(json.dumps(ctx, default=str), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        return _fail(EXIT_USAGE, UsageError("--threads must be >= 1"), args.command)
    try:
        return args.func(args)
    except (DefinitenessError, SeparabilityError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, exc, args.command)
    except (UsageError, ConfigError, InvalidModelError, SeriesFormatError, ValueError, OSError) as exc:
        return _fail(EXIT_USAGE, exc, args.command)


if __name__ == "__main__":
    sys.exit(main())
