"""Branch diagram m(lambda) for the double well with F = alpha x^2 / 2.

Writes every scalar root on a lambda grid and the bisection bracket for lambda_c.

    python scripts/phase_diagram.py --alpha 1 --out out/phase
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from vfplab.model import double_well
from vfplab.stationary import find_branches, phase_scan, var_nu0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--lam-lo", type=float, default=0.02)
    ap.add_argument("--lam-hi", type=float, default=1.0)
    ap.add_argument("--points", type=int, default=60)
    ap.add_argument("--out", default="out/phase")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    V = double_well()
    with open(out / "branches.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "m", "alpha_var_nu0_over_lambda"])
        for lam in np.linspace(args.lam_lo, args.lam_hi, args.points):
            ratio = float(args.alpha * var_nu0(V, args.alpha, lam) / lam)
            for m in find_branches(V, args.alpha, lam):
                w.writerow([repr(float(lam)), repr(m), repr(ratio)])
    scan = phase_scan(V, args.alpha, max(args.lam_lo, 0.05), args.lam_hi, 1e-4)
    lo, hi = scan.bracket
    print(f"lambda_c in [{lo:.6f}, {hi:.6f}], variance-condition root {scan.lambda_c_oracle:.9f}")


if __name__ == "__main__":
    main()
