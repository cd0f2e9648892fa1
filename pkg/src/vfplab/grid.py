"""Cell-centred phase-space grid for d = 1 and discrete densities on it.

All integrals are midpoint sums ``sum(values) * dq * dp``.  Reductions over the
grid are folded pairwise around the centre so that a density symmetric under
(q, p) -> (-q, -p) has odd moments that vanish exactly, not merely to roundoff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

MASS_TOL = 1e-12
VFPD_MAGIC = b"VFPD"
VFPD_VERSION = 1
_VFPD_HEADER = struct.Struct("<4sB4d2I")


@dataclass(frozen=True)
class PhaseGrid:
    q_min: float = -6.0
    q_max: float = 6.0
    p_min: float = -6.0
    p_max: float = 6.0
    n_q: int = 256
    n_p: int = 256

    def __post_init__(self):
        if not (self.q_min < self.q_max and self.p_min < self.p_max):
            raise ValueError(f"empty phase-space box {self}")
        if self.n_q < 8 or self.n_p < 8:
            raise ValueError(f"need at least 8 cells per direction, got {self.n_q}x{self.n_p}")

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_q, self.n_p)

    @staticmethod
    def _centres(lo, hi, n):
        # offsets are exact half-integers, so a box centred at 0 gives nodes
        # with q[i] == -q[n-1-i] bit for bit
        mid = 0.5 * (lo + hi)
        h = (hi - lo) / n
        return mid + (np.arange(n) + 0.5 - 0.5 * n) * h

    @staticmethod
    def _faces(lo, hi, n):
        mid = 0.5 * (lo + hi)
        h = (hi - lo) / n
        return mid + (np.arange(n + 1) - 0.5 * n) * h

    @property
    def q(self) -> np.ndarray:
        return self._centres(self.q_min, self.q_max, self.n_q)

    @property
    def p(self) -> np.ndarray:
        return self._centres(self.p_min, self.p_max, self.n_p)

    @property
    def q_faces(self) -> np.ndarray:
        return self._faces(self.q_min, self.q_max, self.n_q)

    @property
    def p_faces(self) -> np.ndarray:
        return self._faces(self.p_min, self.p_max, self.n_p)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.p, indexing="ij")

    @property
    def reflection_symmetric(self) -> bool:
        return self.q_min == -self.q_max and self.p_min == -self.p_max

    def bounds(self) -> tuple[float, float, float, float]:
        return (self.q_min, self.q_max, self.p_min, self.p_max)


@dataclass
class PhaseDensity:
    """Cell averages of a probability density on ``grid`` (shape n_q x n_p)."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid is {self.grid.shape}")

    @property
    def mass(self) -> float:
        return _fold_sum(self.values) * self.grid.cell_area

    def copy(self) -> PhaseDensity:
        return PhaseDensity(self.grid, self.values.copy())

    def renormalized(self) -> PhaseDensity:
        m = self.mass
        if not m > 0:
            raise ValueError("cannot renormalize a density with zero mass")
        return PhaseDensity(self.grid, self.values / m)

    def q_marginal(self) -> np.ndarray:
        """Marginal density in q at the q nodes."""
        return _fold_rows(self.values) * self.grid.dp

    def p_marginal(self) -> np.ndarray:
        return _fold_rows(self.values.T) * self.grid.dq

    def reflected(self) -> PhaseDensity:
        """Image under (q, p) -> (-q, -p) (requires a centred box)."""
        return PhaseDensity(self.grid, self.values[::-1, ::-1].copy())

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values[::-1, ::-1])))


def _fold_rows(a: np.ndarray) -> np.ndarray:
    """Row sums computed as sum_j (a[:, j] + a[:, n-1-j]) over the lower half."""
    n = a.shape[1]
    h = n // 2
    s = (a[:, :h] + a[:, n - 1:n - 1 - h:-1]).sum(axis=1)
    if n % 2:
        s = s + a[:, h]
    return s


def _fold_vec(w: np.ndarray, x: np.ndarray) -> float:
    """sum_i w[i] x[i], pairing i with n-1-i."""
    n = w.size
    h = n // 2
    t = w[:h] * x[:h] + w[n - 1:n - 1 - h:-1] * x[n - 1:n - 1 - h:-1]
    s = float(np.sum(t))
    if n % 2:
        s += float(w[h] * x[h])
    return s


def _fold_sum(a: np.ndarray) -> float:
    return _fold_vec(np.ones(a.shape[0]), _fold_rows(a))


def density_from_function(grid: PhaseGrid, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> PhaseDensity:
    """Sample ``f`` at cell centres and renormalize to unit discrete mass."""
    Q, Pm = grid.mesh()
    vals = np.broadcast_to(np.asarray(f(Q, Pm), dtype=float), grid.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("density function returned non-finite values on the grid")
    if np.any(vals < 0):
        raise ValueError("density function is negative on the grid")
    if not np.any(vals > 0):
        raise ValueError("density function vanishes on every cell of the grid")
    return PhaseDensity(grid, vals).renormalized()


def gaussian_density(grid: PhaseGrid, mean_q=0.0, var_q=1.0, mean_p=0.0, var_p=1.0) -> PhaseDensity:
    if var_q <= 0 or var_p <= 0:
        raise ValueError("Gaussian variances must be positive")
    return density_from_function(
        grid, lambda q, p: np.exp(-0.5 * (q - mean_q) ** 2 / var_q - 0.5 * (p - mean_p) ** 2 / var_p))


def point_mass(grid: PhaseGrid, i: int, j: int) -> PhaseDensity:
    vals = np.zeros(grid.shape)
    vals[i, j] = 1.0 / grid.cell_area
    return PhaseDensity(grid, vals)


def q_moments(rho: PhaseDensity, k_max: int) -> np.ndarray:
    """[M_0, ..., M_k_max] with M_k = sum q_i^k rho_ij dq dp."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    w = rho.q_marginal() * rho.grid.dq
    q = rho.grid.q
    return np.array([_fold_vec(w, q ** k) for k in range(k_max + 1)])


def p_moments(rho: PhaseDensity, k_max: int) -> np.ndarray:
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    w = rho.p_marginal() * rho.grid.dp
    p = rho.grid.p
    return np.array([_fold_vec(w, p ** k) for k in range(k_max + 1)])


def _check_same_grid(a: PhaseDensity, b: PhaseDensity):
    if a.grid != b.grid:
        raise ValueError(f"densities live on different grids: {a.grid} vs {b.grid}")


def l1_distance(a: PhaseDensity, b: PhaseDensity) -> float:
    _check_same_grid(a, b)
    return float(np.sum(np.abs(a.values - b.values))) * a.grid.cell_area


def boundary_mass(rho: PhaseDensity, layers: int = 2) -> float:
    """Mass in the outermost ``layers`` cell layers of the box."""
    v = rho.values
    inner = v[layers:-layers, layers:-layers]
    return float(np.sum(v) - np.sum(inner)) * rho.grid.cell_area


def entropy_integral(rho: PhaseDensity, floor: float = 1e-300) -> float:
    """sum rho log rho dq dp with 0 log 0 = 0 (values below ``floor`` count as 0)."""
    v = rho.values
    pos = v > floor
    return float(np.sum(v[pos] * np.log(v[pos]))) * rho.grid.cell_area


# --- serialization ----------------------------------------------------------

def write_csv(rho: PhaseDensity, path) -> None:
    """``q,p,value`` rows, header first, row-major in q."""
    Q, Pm = rho.grid.mesh()
    data = np.column_stack([Q.ravel(), Pm.ravel(), rho.values.ravel()])
    np.savetxt(path, data, delimiter=",", header="q,p,value", comments="", fmt="%.17g")


def read_csv(path) -> PhaseDensity:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    qs = np.unique(data[:, 0])
    ps = np.unique(data[:, 1])
    nq, n_p = qs.size, ps.size
    if nq * n_p != data.shape[0]:
        raise ValueError(f"{path}: {data.shape[0]} rows do not form a {nq}x{n_p} grid")
    dq = (qs[-1] - qs[0]) / (nq - 1)
    dp = (ps[-1] - ps[0]) / (n_p - 1)
    grid = PhaseGrid(qs[0] - dq / 2, qs[-1] + dq / 2, ps[0] - dp / 2, ps[-1] + dp / 2, nq, n_p)
    return PhaseDensity(grid, data[:, 2].reshape(nq, n_p))


def to_bytes(rho: PhaseDensity) -> bytes:
    g = rho.grid
    head = _VFPD_HEADER.pack(VFPD_MAGIC, VFPD_VERSION, *g.bounds(), g.n_q, g.n_p)
    return head + np.ascontiguousarray(rho.values, dtype="<f8").tobytes()


def from_bytes(buf: bytes) -> PhaseDensity:
    if len(buf) < _VFPD_HEADER.size:
        raise ValueError("truncated VFPD header")
    magic, version, q0, q1, p0, p1, nq, n_p = _VFPD_HEADER.unpack_from(buf)
    if magic != VFPD_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {VFPD_MAGIC!r}")
    if version != VFPD_VERSION:
        raise ValueError(f"unsupported VFPD version {version}")
    body = buf[_VFPD_HEADER.size:]
    if len(body) != 8 * nq * n_p:
        raise ValueError(f"VFPD body has {len(body)} bytes, expected {8 * nq * n_p}")
    vals = np.frombuffer(body, dtype="<f8").reshape(nq, n_p).astype(float)
    return PhaseDensity(PhaseGrid(q0, q1, p0, p1, nq, n_p), vals)


def write_binary(rho: PhaseDensity, path) -> None:
    Path(path).write_bytes(to_bytes(rho))


def read_binary(path) -> PhaseDensity:
    return from_bytes(Path(path).read_bytes())
