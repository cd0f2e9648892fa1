"""Command-line front end.

Exit codes: 0 ok, 1 config, 2 assumptions, 3 CFL, 4 numerical blow-up,
5 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import free_energy, lower_bound, moment_report, write_report
from .grid import gaussian_density, read_binary, write_binary
from .model import check_assumptions
from .particles import (STATS_COLUMNS, ParticleBlowUp, init_ensemble, run_particles,
                        write_ensemble)
from .pde import CSV_COLUMNS, CFLError, SolverConfig, SolverError, VFPSolver
from .stationary import (QuadratureError, find_branches, fixed_point, phase_scan,
                         scalar_self_consistency, write_phase_csv)

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTIONS, EXIT_CFL, EXIT_BLOWUP, EXIT_NONCONVERGENCE = range(6)

log = logging.getLogger("vfplab")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_provenance(out: Path, command: str, cfg: RunConfig, args, wall: float, **extra) -> None:
    rec = {
        "command": command,
        "vfplab_version": __version__,
        "config_path": cfg.source_path,
        "config_sha256": cfg.source_hash,
        "seed": cfg.particles.seed,
        "threads": args.threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": round(wall, 3),
        **extra,
    }
    (out / f"{command}.provenance.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")


def _quadratic_alpha(cfg: RunConfig) -> float | None:
    g = cfg.F.g_coeffs
    if len(g) == 3 and g[0] == 0 and g[1] == 0 and g[2] > 0:
        return 2 * g[2]
    return None


# --- commands ----------------------------------------------------------------

def cmd_check(cfg: RunConfig, args, out: Path) -> int:
    rho0 = cfg.initial_density() if args.with_initial else None
    report = check_assumptions(cfg.V, cfg.F, rho0)
    print(report.format())
    return EXIT_OK if report.holds() else EXIT_ASSUMPTIONS


def cmd_simulate_pde(cfg: RunConfig, args, out: Path) -> int:
    s = cfg.solver
    try:
        solver_cfg = SolverConfig(dt=s.dt, lam=cfg.lam, stride=s.stride, transport=s.transport)
        solver = VFPSolver(cfg.grid, cfg.V, cfg.F, solver_cfg)
    except CFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CFL
    rho0 = cfg.initial_density()
    t0 = time.perf_counter()
    try:
        rho, series = solver.run(rho0, s.t_end)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    wall = time.perf_counter() - t0
    if not np.all(np.isfinite(rho.values)):
        print("error: density became non-finite", file=sys.stderr)
        return EXIT_BLOWUP
    write_rows(out / "pde_diagnostics.csv", CSV_COLUMNS, series)
    write_binary(rho, out / "pde_final.vfpd")
    write_provenance(out, "simulate-pde", cfg, args, wall, steps=len(series),
                     clipped_mass=solver.clip_total, capped_faces=solver.capped_faces)
    print(f"wrote {len(series)} diagnostic rows to {out}")
    return EXIT_OK


def cmd_simulate_particles(cfg: RunConfig, args, out: Path) -> int:
    pb = cfg.particles
    ens = init_ensemble(cfg.initial_law(), pb.N, pb.seed)
    t0 = time.perf_counter()
    try:
        ens, rows = run_particles(ens, cfg.V, cfg.F, cfg.lam, pb.dt, pb.t_end, pb.stride,
                                  pb.scheme, entropy=pb.entropy)
    except ParticleBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    wall = time.perf_counter() - t0
    cols = STATS_COLUMNS + (("kde_entropy",) if pb.entropy else ())
    write_rows(out / "particle_stats.csv", cols, rows)
    write_ensemble(ens, out / "particles_final.vfpe")
    write_provenance(out, "simulate-particles", cfg, args, wall, N=pb.N)
    print(f"wrote {len(rows)} statistics rows to {out}")
    return EXIT_OK


def cmd_stationary(cfg: RunConfig, args, out: Path) -> int:
    st = cfg.stationary
    t0 = time.perf_counter()
    rows = []
    alpha = _quadratic_alpha(cfg)
    if alpha is not None:
        for m in find_branches(cfg.V, alpha, cfg.lam):
            res = abs(m - scalar_self_consistency(m, cfg.V, alpha, cfg.lam))
            rows.append({"kind": "scalar", "lambda": cfg.lam, "m": m, "residual": res,
                         "iterations": 0, "converged": True})
    rho0 = gaussian_density(cfg.grid, st.bias, 1.0, 0.0, cfg.lam)
    br = fixed_point(rho0, cfg.V, cfg.F, cfg.lam, st.theta, st.tol, st.max_iter)
    rows.append({"kind": "full", "lambda": cfg.lam, "m": br.mean, "residual": br.residual,
                 "iterations": br.iterations, "converged": br.converged})
    write_rows(out / "branches.csv", ("kind", "lambda", "m", "residual", "iterations", "converged"), rows)
    write_binary(br.density, out / "fixed_point.vfpd")
    write_provenance(out, "stationary", cfg, args, time.perf_counter() - t0)
    if not br.converged:
        print(f"error: fixed point did not converge in {br.iterations} iterations, "
              f"residual {br.residual:.3e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    print(f"fixed point: M1 = {br.mean:.10g}, residual {br.residual:.3e} after {br.iterations} iterations")
    return EXIT_OK


def cmd_phase_scan(cfg: RunConfig, args, out: Path) -> int:
    alpha = _quadratic_alpha(cfg)
    if alpha is None:
        print("error: phase-scan needs a quadratic interaction G = [0, 0, alpha/2]", file=sys.stderr)
        return EXIT_CONFIG
    st = cfg.stationary
    t0 = time.perf_counter()
    try:
        res = phase_scan(cfg.V, alpha, st.lambda_lo, st.lambda_hi, st.width_tol, st.n_grid)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_phase_csv(res, out / "phase_scan.csv")
    write_provenance(out, "phase-scan", cfg, args, time.perf_counter() - t0,
                     bracket=list(res.bracket), lambda_c_oracle=res.lambda_c_oracle)
    print(f"lambda_c in [{res.bracket[0]:.6f}, {res.bracket[1]:.6f}]; "
          f"variance-condition root {res.lambda_c_oracle:.6f}")
    return EXIT_OK


def cmd_free_energy(cfg: RunConfig, args, out: Path) -> int:
    if not args.snapshot:
        print("error: free-energy needs --snapshot <file.vfpd>", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rho = read_binary(args.snapshot)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read snapshot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fe = free_energy(rho, cfg.V, cfg.F, cfg.lam)
    lb = lower_bound(cfg.V, cfg.lam, rho.grid)
    write_report(out / "free_energy.txt", free_energy=fe, lower_bound=lb, moments=moment_report(rho))
    print(json.dumps({"free_energy": fe.to_dict(), "Xi": lb.Xi}, indent=2))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "simulate-pde": cmd_simulate_pde,
    "simulate-particles": cmd_simulate_particles,
    "stationary": cmd_stationary,
    "phase-scan": cmd_phase_scan,
    "free-energy": cmd_free_energy,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vfplab", description="Vlasov-Fokker-Planck numerical lab")
    ap.add_argument("--version", action="version", version=f"vfplab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--seed", type=int, default=None, help="overrides particles.seed")
        sp.add_argument("--out", default=None, help="output directory (beats VFP_OUTPUT_DIR)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "check":
            sp.add_argument("--with-initial", action="store_true",
                            help="also check the moment and entropy conditions on the initial density")
        if name == "free-energy":
            sp.add_argument("--snapshot", default=None, help="VFPD density file")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must fit in an unsigned 64-bit integer")
            cfg = replace(cfg, particles=replace(cfg.particles, seed=args.seed))
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.output_path(args.out)
    if args.command != "check":
        out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
