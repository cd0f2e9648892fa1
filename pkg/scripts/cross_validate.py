"""Particle ensemble vs PDE moments along the double-well benchmark.

Prints M1 and M2 of both descriptions at a few times together with the
particle standard errors.

    python scripts/cross_validate.py --n-grid 256 --particles 100000 --seeds 1 2 3
"""

import argparse

import numpy as np

from vfplab.grid import PhaseGrid, gaussian_density
from vfplab.model import double_well, quadratic_interaction
from vfplab.particles import GaussianInit, init_ensemble, run_particles
from vfplab.pde import SolverConfig, VFPSolver

INIT = (0.5, 0.5, 0.0, 0.5)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", type=int, default=256)
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[20240601])
    ap.add_argument("--lam", type=float, default=0.3)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--scheme", choices=["baoab", "euler"], default="baoab")
    ap.add_argument("--particle-dt", type=float, default=1e-2)
    args = ap.parse_args()

    V, F = double_well(), quadratic_interaction(1.0)
    g = PhaseGrid(-6, 6, -6, 6, args.n_grid, args.n_grid)
    solver = VFPSolver(g, V, F, SolverConfig(dt=1e-3, lam=args.lam, stride=1000, transport="muscl"))
    _, pde = solver.run(gaussian_density(g, *INIT), args.t_end)
    pde_at = {round(r["t"], 9): r for r in pde}

    for seed in args.seeds:
        ens = init_ensemble(GaussianInit(*INIT), args.particles, seed)
        _, rows = run_particles(ens, V, F, args.lam, args.particle_dt, args.t_end,
                                stride=int(round(1.0 / args.particle_dt)), scheme=args.scheme)
        print(f"seed {seed}")
        for r in rows:
            ref = pde_at.get(round(r["t"], 9))
            if ref is None:
                continue
            se1 = np.sqrt(max(r["M2_q"] - r["M1_q"] ** 2, 0) / args.particles)
            print(f"  t = {r['t']:5.1f}  M1 {r['M1_q']:.5f} / {ref['M1']:.5f} ({abs(r['M1_q'] - ref['M1']) / se1:.2f} SE)"
                  f"  M2 {r['M2_q']:.5f} / {ref['M2']:.5f}")


if __name__ == "__main__":
    main()
