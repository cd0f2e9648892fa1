"""Run configuration: one TOML file, validated when it is loaded.

Layout (every block optional except what the chosen command needs)::

    lambda = 0.3
    [potential]   V = [...], G = [...]          ascending coefficients
    [solver]      q_min q_max p_min p_max n_q n_p dt t_end stride transport
    [initial]     kind = "gaussian" | "two_point" | "file" (+ its fields)
    [particles]   N dt t_end stride seed scheme entropy
    [stationary]  theta tol max_iter bias lambda_lo lambda_hi width_tol n_grid
    [output]      dir
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .grid import PhaseDensity, PhaseGrid, density_from_function, gaussian_density, read_binary
from .model import ConfiningPotential, InteractionPotential
from .particles import DensityInit, GaussianInit, TwoPointInit

OUTPUT_ENV = "VFP_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverBlock:
    q_min: float = -6.0
    q_max: float = 6.0
    p_min: float = -6.0
    p_max: float = 6.0
    n_q: int = 256
    n_p: int = 256
    dt: float = 1e-3
    t_end: float = 20.0
    stride: int = 10
    transport: str = "upwind"


@dataclass(frozen=True)
class InitialBlock:
    kind: str = "gaussian"
    mean_q: float = 0.0
    var_q: float = 1.0
    mean_p: float = 0.0
    var_p: float = 1.0
    q_a: float = -1.0
    q_b: float = 1.0
    p: float = 0.0
    weight_a: float = 0.5
    spread: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class ParticleBlock:
    N: int = 100_000
    dt: float = 1e-2
    t_end: float = 10.0
    stride: int = 10
    seed: int = 0
    scheme: str = "baoab"
    entropy: bool = False


@dataclass(frozen=True)
class StationaryBlock:
    theta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    bias: float = 0.0
    lambda_lo: float = 0.05
    lambda_hi: float = 1.0
    width_tol: float = 1e-3
    n_grid: int = 20


@dataclass(frozen=True)
class RunConfig:
    lam: float
    V: ConfiningPotential
    F: InteractionPotential
    solver: SolverBlock = field(default_factory=SolverBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    particles: ParticleBlock = field(default_factory=ParticleBlock)
    stationary: StationaryBlock = field(default_factory=StationaryBlock)
    output_dir: str = "out"
    source_hash: str = ""
    source_path: str = ""

    @property
    def grid(self) -> PhaseGrid:
        s = self.solver
        return PhaseGrid(s.q_min, s.q_max, s.p_min, s.p_max, s.n_q, s.n_p)

    def initial_density(self) -> PhaseDensity:
        ini = self.initial
        if ini.kind == "file":
            rho = read_binary(self._resolve(ini.path))
            if rho.grid != self.grid:
                raise ConfigError(f"initial.path grid {rho.grid} differs from the [solver] grid")
            return rho
        if ini.kind == "gaussian":
            return gaussian_density(self.grid, ini.mean_q, ini.var_q, ini.mean_p, ini.var_p)
        if ini.kind == "two_point":
            s = max(ini.spread, 0.1)

            def f(q, p):
                return (ini.weight_a * np.exp(-((q - ini.q_a) ** 2 + (p - ini.p) ** 2) / (2 * s * s))
                        + (1 - ini.weight_a) * np.exp(-((q - ini.q_b) ** 2 + (p - ini.p) ** 2) / (2 * s * s)))
            return density_from_function(self.grid, f)
        raise ConfigError(f"initial.kind {ini.kind!r} is not one of gaussian, two_point, file")

    def initial_law(self):
        ini = self.initial
        if ini.kind == "gaussian":
            return GaussianInit(ini.mean_q, ini.var_q, ini.mean_p, ini.var_p)
        if ini.kind == "two_point":
            return TwoPointInit(ini.q_a, ini.q_b, ini.p, ini.weight_a, ini.spread)
        return DensityInit(self.initial_density())

    def _resolve(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.source_path:
            path = Path(self.source_path).parent / path
        return path

    def output_path(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        return self._resolve(self.output_dir)


def _block(cls, raw: dict, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"[{name}] has unknown field(s): {', '.join(unknown)}")
    kw = {}
    for k, v in raw.items():
        want = type(getattr(cls(), k))
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if want is bool and not isinstance(v, bool) or want is not bool and isinstance(v, bool):
            raise ConfigError(f"field {name}.{k} must be {want.__name__}, got {v!r}")
        if not isinstance(v, want):
            raise ConfigError(f"field {name}.{k} must be {want.__name__}, got {v!r}")
        kw[k] = v
    return cls(**kw)


def _coeffs(raw, name):
    if not isinstance(raw, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in raw):
        raise ConfigError(f"field potential.{name} must be a list of numbers")
    return tuple(float(c) for c in raw)


def _validate(cfg: RunConfig) -> None:
    s = cfg.solver
    checks = [
        (cfg.lam > 0, "lambda must be positive"),
        (s.dt > 0, "solver.dt must be positive"),
        (s.t_end >= 0, "solver.t_end must be non-negative"),
        (s.stride >= 1, "solver.stride must be >= 1"),
        (s.transport in ("upwind", "muscl"), "solver.transport must be upwind or muscl"),
        (cfg.initial.kind in ("gaussian", "two_point", "file"), "initial.kind must be gaussian, two_point or file"),
        (cfg.initial.var_q > 0 and cfg.initial.var_p > 0, "initial variances must be positive"),
        (cfg.initial.kind != "file" or cfg.initial.path, "initial.path required for kind = file"),
        (cfg.particles.N >= 2, "particles.N must be >= 2"),
        (cfg.particles.dt > 0, "particles.dt must be positive"),
        (cfg.particles.t_end >= 0, "particles.t_end must be non-negative"),
        (cfg.particles.stride >= 1, "particles.stride must be >= 1"),
        (0 <= cfg.particles.seed < 2 ** 64, "particles.seed must fit in an unsigned 64-bit integer"),
        (cfg.particles.scheme in ("baoab", "euler"), "particles.scheme must be baoab or euler"),
        (0 < cfg.stationary.theta <= 1, "stationary.theta must lie in (0, 1]"),
        (cfg.stationary.tol > 0, "stationary.tol must be positive"),
        (cfg.stationary.max_iter >= 1, "stationary.max_iter must be >= 1"),
        (0 < cfg.stationary.lambda_lo < cfg.stationary.lambda_hi, "need 0 < stationary.lambda_lo < lambda_hi"),
        (cfg.stationary.width_tol > 0, "stationary.width_tol must be positive"),
        (cfg.stationary.n_grid >= 2, "stationary.n_grid must be >= 2"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    try:
        cfg.grid
    except ValueError as exc:
        raise ConfigError(f"[solver] grid: {exc}") from exc


def parse_config(text: str, source_path: str = "") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {"lambda", "potential", "solver", "initial", "particles", "stationary", "output"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "lambda" not in raw:
        raise ConfigError("field lambda required")
    lam = raw["lambda"]
    if isinstance(lam, bool) or not isinstance(lam, (int, float)):
        raise ConfigError(f"field lambda must be a number, got {lam!r}")
    pot = raw.get("potential")
    if not isinstance(pot, dict) or "V" not in pot:
        raise ConfigError("field potential.V required")
    extra = sorted(set(pot) - {"V", "G"})
    if extra:
        raise ConfigError(f"[potential] has unknown field(s): {', '.join(extra)}")
    try:
        V = ConfiningPotential(_coeffs(pot["V"], "V"))
    except ValueError as exc:
        raise ConfigError(f"field potential.V: {exc}") from exc
    F = InteractionPotential(_coeffs(pot.get("G", []), "G"))
    out = raw.get("output", {})
    if not isinstance(out, dict) or set(out) - {"dir"} or not isinstance(out.get("dir", ""), str):
        raise ConfigError("[output] accepts only dir = \"<path>\"")
    try:
        cfg = RunConfig(
            lam=float(lam), V=V, F=F,
            solver=_block(SolverBlock, raw.get("solver"), "solver"),
            initial=_block(InitialBlock, raw.get("initial"), "initial"),
            particles=_block(ParticleBlock, raw.get("particles"), "particles"),
            stationary=_block(StationaryBlock, raw.get("stationary"), "stationary"),
            output_dir=out.get("dir", "out"),
            source_hash=hashlib.sha256(text.encode()).hexdigest(),
            source_path=source_path,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))
