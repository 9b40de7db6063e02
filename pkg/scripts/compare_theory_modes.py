"""Compare the three readings of the expected adapted MDI against simulation.

The limiting covariance is p^2 x p^2; the expected limit of K (p-1) MDI^2 can
be read off it by summing the variance entries at off-diagonal positions
(``offdiag``), all variance entries (``trace``), or every off-diagonal
element of the big matrix (``literal``). This script prints all three next
to the simulated mean for one (model, T, s) cell.

    python3 scripts/compare_theory_modes.py --model M1 --t 16000 --s 100
"""

import argparse
import math

import numpy as np

from nssjd.asymptotics import sigma_w_z
from nssjd.data import RngStream
from nssjd.experiment import one_rep
from nssjd.models import calibrate_unit_covariance, make_model


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="M1")
    ap.add_argument("--t", type=int, default=16_000)
    ap.add_argument("--s", type=int, default=100)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--mc-reps", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    k = args.t // args.s
    model = calibrate_unit_covariance(make_model(args.model), k, args.s)
    vals = np.array(
        [one_rep(model, args.t, args.s, np.eye(model.p), RngStream(args.seed, 0).child(r)) for r in range(args.reps)]
    )
    print(f"simulated  {vals.mean():.4f} +- {vals.std(ddof=1) / math.sqrt(len(vals)):.4f}")
    cov = sigma_w_z(model, k, args.s, RngStream(args.seed, 1), n_mc=args.mc_reps, n_jobs=args.threads)
    for mode in ("offdiag", "trace", "literal"):
        val, se = cov.expected_adapted_mdi(mode=mode)
        print(f"{mode:<10} {val:.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()
