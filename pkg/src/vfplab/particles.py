"""Interacting particle approximation of the self-stabilizing Langevin system.

    dQ = P dt,   dP = -V'(Q) dt - (F' * rho_t)(Q) dt - P dt + sqrt(2 lam) dW

with rho_t replaced by the empirical measure of N particles.  The mean-field
force comes from the empirical q-moments (taken about the ensemble mean for
conditioning), which is O(N deg) per evaluation instead of O(N^2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.signal import fftconvolve

from .diagnostics import FreeEnergyReport
from .grid import PhaseDensity
from .model import ConfiningPotential, InteractionPotential, convolve_interaction, poly_derivative

VFPE_MAGIC = b"VFPE"
VFPE_VERSION = 1
_VFPE_HEADER = struct.Struct("<4sBQdQ")
STATS_COLUMNS = ("t", "M1_q", "M2_q", "M1_p", "M2_p")
EXACT_KDE_MAX_N = 4000


class ParticleBlowUp(FloatingPointError):
    def __init__(self, index: int, t: float):
        self.index = index
        self.t = t
        super().__init__(f"particle {index} left the finite range at t = {t:g}")


def make_rng(seed: int) -> np.random.Generator:
    """One counter-based stream per run."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class ParticleEnsemble:
    q: np.ndarray
    p: np.ndarray
    rng: np.random.Generator
    t: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.ndim != 1 or self.q.shape != self.p.shape:
            raise ValueError("q and p must be 1-d arrays of equal length")
        if self.q.size < 2:
            raise ValueError("an ensemble needs at least 2 particles")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("ensemble coordinates must be finite")

    @property
    def N(self) -> int:
        return self.q.size

    def moments(self) -> dict[str, float]:
        return {"M1_q": float(np.mean(self.q)), "M2_q": float(np.mean(self.q ** 2)),
                "M1_p": float(np.mean(self.p)), "M2_p": float(np.mean(self.p ** 2))}


# --- initial laws ------------------------------------------------------------

@dataclass(frozen=True)
class GaussianInit:
    mean_q: float = 0.0
    var_q: float = 1.0
    mean_p: float = 0.0
    var_p: float = 1.0

    def __post_init__(self):
        if not (self.var_q > 0 and self.var_p > 0):
            raise ValueError("Gaussian variances must be positive")


@dataclass(frozen=True)
class TwoPointInit:
    """Mixture of two points with weights (weight_a, 1 - weight_a), optionally smeared by a Gaussian."""

    q_a: float = -1.0
    q_b: float = 1.0
    p: float = 0.0
    weight_a: float = 0.5
    spread: float = 0.0

    def __post_init__(self):
        if not 0 <= self.weight_a <= 1:
            raise ValueError("mixture weight must lie in [0, 1]")
        if self.spread < 0:
            raise ValueError("spread must be non-negative")


@dataclass(frozen=True)
class DensityInit:
    rho: PhaseDensity


def init_ensemble(law, N: int, seed: int) -> ParticleEnsemble:
    """N i.i.d. draws from ``law``; the same (law, N, seed) gives identical arrays."""
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = make_rng(seed)
    if isinstance(law, GaussianInit):
        q = law.mean_q + np.sqrt(law.var_q) * rng.standard_normal(N)
        p = law.mean_p + np.sqrt(law.var_p) * rng.standard_normal(N)
    elif isinstance(law, TwoPointInit):
        pick_a = rng.random(N) < law.weight_a
        q = np.where(pick_a, law.q_a, law.q_b).astype(float)
        p = np.full(N, float(law.p))
        if law.spread > 0:
            q = q + law.spread * rng.standard_normal(N)
            p = p + law.spread * rng.standard_normal(N)
    elif isinstance(law, DensityInit):
        q, p = _sample_density(law.rho, N, rng)
    else:
        raise TypeError(f"unsupported initial law {law!r}")
    return ParticleEnsemble(q, p, rng, 0.0, seed)


def _sample_density(rho: PhaseDensity, N: int, rng: np.random.Generator):
    """Pick cells with probability rho_ij dq dp, then a uniform point in the cell."""
    g = rho.grid
    w = np.clip(rho.values.ravel(), 0, None)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, rng.random(N), side="right"), cdf.size - 1)
    i, j = np.divmod(idx, g.n_p)
    q = g.q_min + (i + rng.random(N)) * g.dq
    p = g.p_min + (j + rng.random(N)) * g.dp
    return q, p


# --- forces ------------------------------------------------------------------

def mean_field_force(ens_or_q, F: InteractionPotential) -> np.ndarray:
    """(F' * rho_N)(q_i) from empirical moments about the ensemble mean."""
    q = ens_or_q.q if isinstance(ens_or_q, ParticleEnsemble) else np.asarray(ens_or_q, dtype=float)
    if F.is_zero or F.degree < 1:
        return np.zeros_like(q)
    c = float(np.mean(q))
    x = q - c
    deg = F.degree
    pw = np.ones_like(x)
    M = np.empty(deg + 1)
    for k in range(deg + 1):
        M[k] = np.mean(pw)
        pw = pw * x
    dconv = poly_derivative(convolve_interaction(F, M))
    return P.polyval(x, dconv)


def pairwise_force(q, F: InteractionPotential) -> np.ndarray:
    """(1/N) sum_j F'(q_i - q_j), the O(N^2) reference."""
    q = np.asarray(q, dtype=float)
    return np.mean(F.derivative(q[:, None] - q[None, :]), axis=1)


def total_force(q, V: ConfiningPotential, F: InteractionPotential) -> np.ndarray:
    """V'(q) + (F' * rho_N)(q); the momentum update subtracts it."""
    return P.polyval(q, poly_derivative(V.array)) + mean_field_force(q, F)


def _check_finite(q, p, t):
    bad = ~(np.isfinite(q) & np.isfinite(p))
    if np.any(bad):
        raise ParticleBlowUp(int(np.flatnonzero(bad)[0]), t)


def step_particles(ens: ParticleEnsemble, V: ConfiningPotential, F: InteractionPotential,
                   lam: float, dt: float, scheme: str = "baoab") -> ParticleEnsemble:
    """One step; consumes exactly N standard normals from the ensemble's stream."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    q, p = ens.q, ens.p
    xi = ens.rng.standard_normal(ens.N)
    with np.errstate(over="ignore", invalid="ignore"):   # blow-ups are reported below
        if scheme == "baoab":
            p = p - 0.5 * dt * total_force(q, V, F)
            q = q + 0.5 * dt * p
            damp = np.exp(-dt)
            p = damp * p + np.sqrt(lam * -np.expm1(-2 * dt)) * xi
            q = q + 0.5 * dt * p
            p = p - 0.5 * dt * total_force(q, V, F)
        elif scheme == "euler":
            f = total_force(q, V, F)
            q, p = q + dt * p, p - dt * (f + p) + np.sqrt(2 * lam * dt) * xi
        else:
            raise ValueError(f"unknown particle scheme {scheme!r}")
    t = ens.t + dt
    _check_finite(q, p, t)
    return ParticleEnsemble(q, p, ens.rng, t, ens.seed)


def run_particles(ens: ParticleEnsemble, V: ConfiningPotential, F: InteractionPotential, lam: float,
                  dt: float, t_end: float, stride: int = 10, scheme: str = "baoab",
                  observer: Callable | None = None, entropy: bool = False):
    """Advance to t_end, returning (final ensemble, rows of STATS_COLUMNS)."""
    n_steps = int(np.floor(t_end / dt + 1e-9))
    rows = []

    def record(e):
        row = {"t": e.t, **e.moments()}
        if entropy:
            row["kde_entropy"] = kde_entropy(e)
        rows.append(row)
        if observer is not None:
            observer(e, row)

    record(ens)
    for k in range(1, n_steps + 1):
        ens = step_particles(ens, V, F, lam, dt, scheme)
        if k % stride == 0:
            record(ens)
    return ens, rows


# --- entropy -----------------------------------------------------------------

def _bandwidths(x: np.ndarray, policy: str) -> float:
    n = x.size
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    if policy == "silverman":
        s = min(sd, iqr / 1.349) if iqr > 0 else sd
        return 0.9 * s * n ** (-0.2)
    if policy == "scott":
        # d = 2: n^(-1/(d+4))
        return sd * n ** (-1 / 6)
    raise ValueError(f"unknown bandwidth policy {policy!r}")


def kde_entropy(ens: ParticleEnsemble, bandwidth: str = "silverman", method: str = "auto") -> float:
    """-mean log f_(-i)(q_i, p_i) for a product-Gaussian leave-one-out KDE.

    ``method="exact"`` sums all pairs; ``"binned"`` (default above 4000
    particles) uses linear binning and an FFT convolution, then removes each
    point's own kernel contribution.  The estimator is biased at finite N and is
    meant for diagnostics only.
    """
    q, p = ens.q, ens.p
    N = q.size
    if N < 100:
        raise ValueError("kde_entropy needs at least 100 particles")
    if np.ptp(q) == 0 or np.ptp(p) == 0:
        raise ValueError("degenerate ensemble: zero spread in q or p")
    hq = _bandwidths(q, bandwidth)
    hp = _bandwidths(p, bandwidth)
    if method == "auto":
        method = "exact" if N <= EXACT_KDE_MAX_N else "binned"
    norm = 1.0 / (2 * np.pi * hq * hp)
    if method == "exact":
        dens = np.empty(N)
        for s in range(0, N, 512):
            dq = (q[s:s + 512, None] - q[None, :]) / hq
            dp = (p[s:s + 512, None] - p[None, :]) / hp
            k = np.exp(-0.5 * (dq * dq + dp * dp))
            dens[s:s + 512] = (k.sum(axis=1) - 1.0) * norm / (N - 1)
    elif method == "binned":
        dens = _binned_loo(q, p, hq, hp, norm)
    else:
        raise ValueError(f"unknown KDE method {method!r}")
    return float(-np.mean(np.log(np.maximum(dens, 1e-300))))


def _binned_loo(q, p, hq, hp, norm, per_h: int = 4, max_bins: int = 2048):
    N = q.size

    def axis(x, h):
        lo = x.min() - 5 * h
        hi = x.max() + 5 * h
        n = int(min(max_bins, np.ceil((hi - lo) / h * per_h))) + 1
        return lo, (hi - lo) / (n - 1), n

    q0, dq, nq = axis(q, hq)
    p0, dp, n_p = axis(p, hp)
    fi = (q - q0) / dq
    fj = (p - p0) / dp
    i = np.clip(np.floor(fi).astype(int), 0, nq - 2)
    j = np.clip(np.floor(fj).astype(int), 0, n_p - 2)
    a = fi - i
    b = fj - j
    counts = np.zeros((nq, n_p))
    np.add.at(counts, (i, j), (1 - a) * (1 - b))
    np.add.at(counts, (i + 1, j), a * (1 - b))
    np.add.at(counts, (i, j + 1), (1 - a) * b)
    np.add.at(counts, (i + 1, j + 1), a * b)
    kq = np.exp(-0.5 * ((np.arange(-nq + 1, nq) * dq) / hq) ** 2)
    kp = np.exp(-0.5 * ((np.arange(-n_p + 1, n_p) * dp) / hp) ** 2)
    # truncate the kernel at 6 bandwidths
    kq = kq[np.abs(np.arange(-nq + 1, nq) * dq) <= 6 * hq]
    kp = kp[np.abs(np.arange(-n_p + 1, n_p) * dp) <= 6 * hp]
    smooth = fftconvolve(counts, np.outer(kq, kp), mode="same")
    s = ((1 - a) * (1 - b) * smooth[i, j] + a * (1 - b) * smooth[i + 1, j]
         + (1 - a) * b * smooth[i, j + 1] + a * b * smooth[i + 1, j + 1])
    # a point's own binned mass seen through the same interpolation
    kq1 = np.exp(-0.5 * (dq / hq) ** 2)
    kp1 = np.exp(-0.5 * (dp / hp) ** 2)
    own = ((1 - a) ** 2 + a * a + 2 * a * (1 - a) * kq1) * ((1 - b) ** 2 + b * b + 2 * b * (1 - b) * kp1)
    return (s - own) * norm / (N - 1)


def particle_free_energy(ens: ParticleEnsemble, V: ConfiningPotential, F: InteractionPotential,
                         lam: float, bandwidth: str = "silverman") -> FreeEnergyReport:
    """Free energy of the empirical law with a KDE entropy; dissipation is not estimated."""
    kinetic = 0.5 * float(np.mean(ens.p ** 2))
    confinement = float(np.mean(P.polyval(ens.q, V.array)))
    inter = 0.0
    if not F.is_zero:
        c = float(np.mean(ens.q))
        x = ens.q - c
        M = np.array([np.mean(x ** k) for k in range(F.degree + 1)])
        inter = 0.5 * float(np.mean(P.polyval(x, convolve_interaction(F, M))))
    ent = -lam * kde_entropy(ens, bandwidth)
    total = kinetic + confinement + inter + ent
    return FreeEnergyReport(kinetic, confinement, inter, ent, total, float("nan"))


# --- snapshots ---------------------------------------------------------------

def to_bytes(ens: ParticleEnsemble) -> bytes:
    head = _VFPE_HEADER.pack(VFPE_MAGIC, VFPE_VERSION, ens.N, ens.t, ens.seed)
    return head + ens.q.astype("<f8").tobytes() + ens.p.astype("<f8").tobytes()


def from_bytes(buf: bytes) -> ParticleEnsemble:
    """Rebuild an ensemble; its generator is re-seeded from the stored seed."""
    if len(buf) < _VFPE_HEADER.size:
        raise ValueError("truncated VFPE header")
    magic, version, N, t, seed = _VFPE_HEADER.unpack_from(buf)
    if magic != VFPE_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {VFPE_MAGIC!r}")
    if version != VFPE_VERSION:
        raise ValueError(f"unsupported VFPE version {version}")
    body = buf[_VFPE_HEADER.size:]
    if len(body) != 16 * N:
        raise ValueError(f"VFPE body has {len(body)} bytes, expected {16 * N}")
    arr = np.frombuffer(body, dtype="<f8").astype(float)
    return ParticleEnsemble(arr[:N], arr[N:], make_rng(seed), t, seed)


def write_ensemble(ens: ParticleEnsemble, path) -> None:
    Path(path).write_bytes(to_bytes(ens))


def read_ensemble(path) -> ParticleEnsemble:
    return from_bytes(Path(path).read_bytes())
