"""Finite-volume time stepping of the Vlasov-Fokker-Planck equation in (q, p).

    d_t rho = -p d_q rho + d_p[(W'(q) + p) rho] + lam d_pp rho,   W = V + F * rho

Discretisation
--------------
Fluxes are written against the local Gibbs weight M = exp(-(p^2/2 + W(q))/lam)
evaluated at cell centres, with W frozen over a step:

* q-faces carry the mass flux ``p_j * Mbar * h_up`` where h = rho / M and Mbar
  is the geometric mean of the two neighbouring weights (first-order upwind in
  h, or a minmod-limited second-order reconstruction);
* p-faces carry a Scharfetter-Gummel flux for the Ornstein-Uhlenbeck part plus
  a Gibbs flux that makes the discrete divergence of the M-fluxes vanish exactly.

The q part is explicit and the p part (force, friction, diffusion) is one
implicit tridiagonal solve per q column.  Because the explicit q operator is
applied before the implicit p operator, ``rho = M`` is mapped to itself bit for
bit up to roundoff, so the discrete Gibbs state of the current field is an
exact steady state and each step is a Markov kernel leaving it invariant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg.lapack import dgtsv as _gtsv

from . import _kernels as _k
from .grid import PhaseDensity, PhaseGrid, boundary_mass, q_moments
from .model import ConfiningPotential, InteractionPotential, convolve_interaction, poly_derivative

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "free_energy", "kinetic", "confinement", "interaction", "entropy",
               "dissipation", "mass", "M1", "M2", "boundary_mass")


class CFLError(ValueError):
    """Raised when dt exceeds the explicit transport limit."""

    def __init__(self, dt, admissible_dt):
        self.dt = dt
        self.admissible_dt = admissible_dt
        super().__init__(f"dt = {dt:g} violates the transport CFL bound; admissible dt <= {admissible_dt:.6g}")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    lam: float = 0.3
    stride: int = 10
    transport: str = "upwind"   # or "muscl"
    backend: str = "numba"      # or "numpy" (reference loops, slower)
    cfl_safety: float = 0.9
    boundary_warn: float = 1e-6
    clip_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.transport not in ("upwind", "muscl"):
            raise ValueError(f"unknown transport scheme {self.transport!r}")
        if self.backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")


def bernoulli(x):
    """B(x) = x / (exp(x) - 1), B(0) = 1, evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-8
    big = x > 700.0
    mid = ~(small | big)
    out[small] = 1.0 - 0.5 * x[small]
    out[big] = x[big] * np.exp(-x[big])
    out[mid] = x[mid] / np.expm1(x[mid])
    return out


@dataclass
class EffectivePotentialField:
    """W = V + F * rho and W' on the q nodes, plus one ghost node on each side."""

    coeffs: np.ndarray
    q_ext: np.ndarray
    W_ext: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return self.W_ext[1:-1]

    @property
    def dW(self) -> np.ndarray:
        return P.polyval(self.q_ext[1:-1], poly_derivative(self.coeffs))

    def __call__(self, q):
        return P.polyval(q, self.coeffs)


def effective_field(rho: PhaseDensity, V: ConfiningPotential, F: InteractionPotential) -> EffectivePotentialField:
    """Field of ``rho`` with the convolution taken from its exact q-moments."""
    conv = convolve_interaction(F, q_moments(rho, F.degree))
    coeffs = P.polyadd(V.array, conv)
    return field_from_coeffs(rho.grid, coeffs)


def field_from_coeffs(grid: PhaseGrid, coeffs) -> EffectivePotentialField:
    q = grid.q
    dq = grid.dq
    q_ext = np.concatenate([[q[0] - dq], q, [q[-1] + dq]])
    coeffs = np.asarray(coeffs, dtype=float)
    return EffectivePotentialField(coeffs, q_ext, P.polyval(q_ext, coeffs))


def flat_field(grid: PhaseGrid) -> EffectivePotentialField:
    return field_from_coeffs(grid, [0.0])


@dataclass
class _PCache:
    """p-direction quantities that only depend on the grid and lambda."""

    u0: np.ndarray        # (p_{j+1}^2 - p_j^2) / (2 lam) on interior faces
    B_plus: np.ndarray    # B(u0)
    B_minus: np.ndarray   # B(-u0)
    R: np.ndarray         # sum_{k<=j} p_k G_k dp / G_j with G = exp(-p^2 / 2 lam)


def _p_cache(grid: PhaseGrid, lam: float) -> _PCache:
    p = grid.p
    n = p.size
    dp = grid.dp
    u0 = (p[1:] ** 2 - p[:-1] ** 2) / (2 * lam)
    R = np.empty(n - 1)
    E = -(p[None, :] ** 2 - p[:, None] ** 2) / (2 * lam)   # E[j, k] = -(p_k^2 - p_j^2)/2lam
    for j in range(n - 1):
        if p[j] + p[j + 1] <= 0:
            R[j] = dp * np.sum(p[: j + 1] * np.exp(E[j, : j + 1]))
        else:
            R[j] = -dp * np.sum(p[j + 1:] * np.exp(E[j, j + 1:]))
    return _PCache(u0, bernoulli(u0), bernoulli(-u0), R)


def _minmod(a, b):
    return np.maximum(np.minimum(a, b), 0.0) + np.minimum(np.maximum(a, b), 0.0)


class VFPSolver:
    """Time stepper for one (grid, V, F, config) combination."""

    def __init__(self, grid: PhaseGrid, V: ConfiningPotential, F: InteractionPotential, cfg: SolverConfig):
        self.grid = grid
        self.V = V
        self.F = F
        self.cfg = cfg
        self._pc = _p_cache(grid, cfg.lam)
        self.clip_total = 0.0
        self.capped_faces = 0
        self.admissible_dt = cfg.cfl_safety * grid.dq / np.max(np.abs(grid.p))
        if cfg.dt > self.admissible_dt:
            raise CFLError(cfg.dt, self.admissible_dt)

    # -- building blocks ------------------------------------------------------

    def field(self, rho: PhaseDensity) -> EffectivePotentialField:
        return effective_field(rho, self.V, self.F)

    def q_velocities(self, fld: EffectivePotentialField, dt: float) -> np.ndarray:
        """Upwind-relative face velocities v[i, j] for faces i+1/2, i = 0..n_q-2.

        The flux through the face is v * rho_up (up = left cell when p_j > 0).
        """
        lam = self.cfg.lam
        p = self.grid.p
        dW = np.diff(fld.W)                          # W_{i+1} - W_i
        sgn = np.where(p > 0, 1.0, -1.0)
        v = p[None, :] * np.exp(-sgn[None, :] * dW[:, None] / (2 * lam))
        cap = self.grid.dq / dt
        over = np.abs(v) > cap
        if np.any(over):
            self.capped_faces += int(np.count_nonzero(over))
            v = np.clip(v, -cap, cap)
        return v

    def substep_transport_q(self, rho: PhaseDensity, dt: float,
                            fld: EffectivePotentialField | None = None) -> PhaseDensity:
        """Explicit conservative transport along q with zero-flux walls."""
        g = self.grid
        limit = g.dq / np.max(np.abs(g.p))
        if dt > limit * (1 + 1e-12):
            raise CFLError(dt, limit)
        if fld is None:
            fld = flat_field(g)
        r = rho.values
        if self.cfg.backend == "numba":
            out, capped = _k.transport_q(r, fld.W, g.p, self.cfg.lam, dt, g.dq, self.cfg.transport == "muscl")
            self.capped_faces += capped
            return PhaseDensity(g, out)
        v = self.q_velocities(fld, dt)
        pos = (g.p > 0)[None, :]
        up = np.where(pos, r[:-1], r[1:])
        if self.cfg.transport == "muscl":
            raw = up
            up = up * self._muscl_factor(r, fld, pos)
            # a cell cannot send out more than it holds
            c = dt / g.dq * np.abs(v)
            over = c * up > raw
            up = np.where(over, raw / np.where(c > 0, c, 1.0), up)
        flux = v * up
        out = r.copy()
        out[:-1] -= dt / g.dq * flux
        out[1:] += dt / g.dq * flux
        return PhaseDensity(g, out)

    def _muscl_factor(self, r, fld, pos):
        """h_face / h_up for a minmod-limited linear reconstruction of h = rho / M."""
        lam = self.cfg.lam
        lr = np.log(np.maximum(r, 1e-300))
        # log(h_{i+1} / h_i) on faces i+1/2
        dlh = np.clip((lr[1:] - lr[:-1]) + (np.diff(fld.W) / lam)[:, None], -700, 700)
        fwd = np.expm1(dlh)        # h_{i+1}/h_i - 1
        bwd = np.expm1(-dlh)       # h_i/h_{i+1} - 1
        right = np.zeros_like(dlh)   # p > 0, upwind cell i
        right[1:] = 0.5 * _minmod(fwd[1:], -bwd[:-1])
        left = np.zeros_like(dlh)    # p < 0, upwind cell i+1
        left[:-1] = 0.5 * _minmod(bwd[:-1], -fwd[1:])
        fac = np.where(pos, 1.0 + right, 1.0 + left)
        fac[~np.isfinite(fac)] = 1.0
        return fac

    def _phi(self, fld: EffectivePotentialField) -> np.ndarray:
        """Discrete W'(q_i) / lam built from the Gibbs weights of the neighbours."""
        lam = self.cfg.lam
        We = fld.W_ext
        Wc = We[1:-1]
        Ap = np.exp(-(We[2:] - Wc) / (2 * lam))     # A_{i+1/2} / A_i
        Am = np.exp(-(We[:-2] - Wc) / (2 * lam))    # A_{i-1/2} / A_i
        return -(Ap - Am) / self.grid.dq

    def p_rates(self, fld: EffectivePotentialField) -> tuple[np.ndarray, np.ndarray]:
        """Rates (a, b) on interior p-faces: flux J = a rho_j - b rho_{j+1}."""
        lam = self.cfg.lam
        g = self.grid
        pc = self._pc
        phi = self._phi(fld)
        tau = (g.dp / lam) * phi[:, None] * pc.R[None, :]
        Pe = tau / pc.B_plus[None, :]
        c = lam / g.dp
        a = c * pc.B_plus[None, :] * bernoulli(-Pe)
        b = c * pc.B_minus[None, :] * bernoulli(Pe)
        return a, b

    def substep_fokker_planck_p(self, rho: PhaseDensity, dt: float,
                                fld: EffectivePotentialField | None = None) -> PhaseDensity:
        """Implicit force + friction + diffusion step in p, one tridiagonal per column."""
        g = self.grid
        if fld is None:
            fld = flat_field(g)
        if self.cfg.backend == "numba":
            pc = self._pc
            x, ok = _k.fokker_planck_p(rho.values, self._phi(fld), pc.B_plus, pc.B_minus, pc.R,
                                       self.cfg.lam, dt, g.dp)
            if not ok:
                raise SolverError(f"tridiagonal p-solve failed at dt = {dt:g}")
            return PhaseDensity(g, x)
        a, b = self.p_rates(fld)
        nq, n_p = g.shape
        k = dt / g.dp
        # one tridiagonal system for all columns; the couplings across column
        # boundaries are zero because the walls carry no flux
        diag = np.ones((nq, n_p))
        diag[:, :-1] += k * a
        diag[:, 1:] += k * b
        upper = np.zeros((nq, n_p))     # coefficient of rho_{j+1} in row j
        lower = np.zeros((nq, n_p))     # coefficient of rho_{j-1} in row j
        upper[:, :-1] = -k * b
        lower[:, 1:] = -k * a
        _, _, _, x, info = _gtsv(lower.ravel()[1:], diag.ravel(), upper.ravel()[:-1], rho.values.ravel())
        if info != 0 or not np.all(np.isfinite(x)):
            raise SolverError(f"tridiagonal p-solve failed at dt = {dt:g} (info = {info})")
        return PhaseDensity(g, x.reshape(nq, n_p))

    # -- full step / run ------------------------------------------------------

    def step(self, rho: PhaseDensity) -> PhaseDensity:
        dt = self.cfg.dt
        fld = self.field(rho)
        mid = self.substep_transport_q(rho, dt, fld)
        out = self.substep_fokker_planck_p(mid, dt, fld)
        return self._clean(out, rho.mass)

    def _clean(self, rho: PhaseDensity, target_mass: float) -> PhaseDensity:
        v = rho.values
        neg = v < 0
        if np.any(neg):
            clipped = -float(np.sum(v[neg])) * rho.grid.cell_area
            self.clip_total += clipped
            if clipped > self.cfg.clip_tol:
                log.warning("clipped %.3e of negative mass in one step", clipped)
            v = np.where(neg, 0.0, v)
            rho = PhaseDensity(rho.grid, v)
        m = rho.mass
        if abs(m - target_mass) > 0:
            rho = PhaseDensity(rho.grid, rho.values * (target_mass / m))
        return rho

    def run(self, rho0: PhaseDensity, t_end: float,
            observer: Callable | None = None, diagnostics: bool = True):
        """Advance to t_end; returns (final density, list of diagnostic rows).

        Diagnostics are recorded at t = 0 and every ``stride`` steps; a run
        shorter than one step returns rho0 and an empty series.
        """
        from .diagnostics import free_energy, moment_report

        n_steps = int(np.floor(t_end / self.cfg.dt + 1e-9))
        series: list[dict] = []
        if n_steps <= 0:
            return rho0, series
        lam = self.cfg.lam
        warned = False

        def record(t, rho):
            nonlocal warned
            rep = free_energy(rho, self.V, self.F, lam)
            mom = moment_report(rho)
            row = {
                "t": t, "free_energy": rep.total, "kinetic": rep.kinetic,
                "confinement": rep.confinement, "interaction": rep.interaction,
                "entropy": rep.entropy_term, "dissipation": rep.dissipation,
                "mass": rho.mass, "M1": mom["M1_q"], "M2": mom["M2_q"],
                "boundary_mass": mom["boundary_mass"],
            }
            if row["boundary_mass"] > self.cfg.boundary_warn and not warned:
                log.warning("boundary mass %.3e exceeds %.1e at t = %g",
                            row["boundary_mass"], self.cfg.boundary_warn, t)
                warned = True
            series.append(row)
            if observer is not None:
                observer(t, rep, mom, row["boundary_mass"])

        rho = rho0
        if diagnostics:
            record(0.0, rho)
        for k in range(1, n_steps + 1):
            rho = self.step(rho)
            if diagnostics and k % self.cfg.stride == 0:
                record(k * self.cfg.dt, rho)
        return rho, series


def step(rho: PhaseDensity, V: ConfiningPotential, F: InteractionPotential, cfg: SolverConfig) -> PhaseDensity:
    return VFPSolver(rho.grid, V, F, cfg).step(rho)


def run(rho0: PhaseDensity, V, F, cfg: SolverConfig, t_end: float, observer=None):
    return VFPSolver(rho0.grid, V, F, cfg).run(rho0, t_end, observer)


def boundary_fraction(rho: PhaseDensity) -> float:
    return boundary_mass(rho)
