"""Run a simulation-vs-theory grid and print the results table.

    python3 scripts/run_grid.py scripts/configs/desk_scale.json --threads 4
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from nssjd.experiment import ExperimentConfig, run_experiment, write_results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--timing", action="store_true", help="fill the seconds column")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    raw = json.loads(Path(args.config).read_text())
    if args.timing:
        raw["record_timing"] = True
    cfg = ExperimentConfig.from_dict(raw)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, manifest = run_experiment(cfg, n_jobs=args.threads)
    write_results(rows, out / "results.csv")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    print(f"{'model':>5} {'T':>6} {'s':>4} {'K':>5} {'simulated':>18} {'theory':>18} {'ratio':>6}")
    for r in rows:
        ratio = r.mean / r.theory if r.theory == r.theory and r.theory else float("nan")
        print(
            f"{r.model:>5} {r.t_len:>6} {r.s:>4} {r.k:>5} "
            f"{r.mean:>10.4f} +-{r.se:<6.4f} {r.theory:>10.4f} +-{r.theory_se:<6.4f} {ratio:>6.3f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
