"""Invariant probabilities: the Gibbs self-consistency map and its fixed points.

For a quadratic interaction F(x) = alpha x^2 / 2 the convolution is
alpha (q - m)^2 / 2 + const with m the mean position, so a stationary state is
determined by a scalar root of m = Phi(m), where Phi(m) is the mean of the tilted
measure  exp(-(V(q) + alpha (q - m)^2 / 2) / lam) dq.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad, quad_vec
from scipy.optimize import brentq

from .grid import PhaseDensity, l1_distance, q_moments
from .model import ConfiningPotential, InteractionPotential, convolve_interaction, poly_derivative

DEFAULT_L = 12.0
TAIL_TOL = 1e-14
QUAD_EPSABS = 1e-12
SCAN_NODES = 2048


class QuadratureError(RuntimeError):
    pass


@dataclass
class StationaryBranch:
    lam: float
    kind: str                       # "scalar" or "full"
    residual: float
    iterations: int
    converged: bool
    m: float | None = None
    density: PhaseDensity | None = None

    @property
    def mean(self) -> float:
        if self.kind == "scalar":
            return float(self.m)
        return float(q_moments(self.density, 1)[1])


@dataclass
class PhaseScanResult:
    lambdas: np.ndarray
    counts: np.ndarray
    roots: list[list[float]]
    bracket: tuple[float, float]
    lambda_c_oracle: float
    bisection_steps: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    @property
    def lambda_c(self) -> float:
        return 0.5 * (self.bracket[0] + self.bracket[1])

    @property
    def oracle_in_bracket(self) -> bool:
        return self.bracket[0] <= self.lambda_c_oracle <= self.bracket[1]


# --- full densities ----------------------------------------------------------

def gibbs_map(rho: PhaseDensity, V: ConfiningPotential, F: InteractionPotential, lam: float) -> PhaseDensity:
    """C exp(-(p^2/2 + V + F * rho) / lam) on rho's grid, unit discrete mass."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g = rho.grid
    coeffs = V.array
    if not F.is_zero:
        coeffs = P.polyadd(coeffs, convolve_interaction(F, q_moments(rho, F.degree)))
    Eq = P.polyval(g.q, coeffs) / lam
    Ep = 0.5 * g.p ** 2 / lam
    gq = np.exp(-(Eq - Eq.min()))
    gp = np.exp(-(Ep - Ep.min()))
    vals = np.outer(gq, gp)
    return PhaseDensity(g, vals).renormalized()


def fixed_point(rho0: PhaseDensity, V: ConfiningPotential, F: InteractionPotential, lam: float,
                theta: float = 0.5, tol: float = 1e-10, max_iter: int = 10_000) -> StationaryBranch:
    """Damped iteration rho <- (1 - theta) rho + theta T(rho).

    Stops when l1(rho, T(rho)) <= tol.  Hitting ``max_iter`` is reported through
    ``converged=False`` with the last residual, not raised.
    """
    if not 0 < theta <= 1:
        raise ValueError("damping theta must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if F.is_zero:
        theta = 1.0   # T is constant, so damping only slows it down
    rho = rho0.renormalized()
    res = np.inf
    for it in range(1, max_iter + 1):
        T = gibbs_map(rho, V, F, lam)
        res = l1_distance(rho, T)
        if res <= tol:
            return StationaryBranch(lam, "full", res, it, True, density=rho)
        rho = PhaseDensity(rho.grid, (1 - theta) * rho.values + theta * T.values)
    return StationaryBranch(lam, "full", res, max_iter, False, density=rho)


# --- scalar reduction for F = alpha x^2 / 2 ----------------------------------

def _tilted_exponent(V: ConfiningPotential, alpha: float, m: float) -> np.ndarray:
    """Coefficients of V(q) + alpha (q - m)^2 / 2."""
    return P.polyadd(V.array, [alpha * m * m / 2, -alpha * m, alpha / 2])


def _real_critical_points(coeffs, lo, hi) -> list[float]:
    d = poly_derivative(coeffs)
    if d.size < 2:
        return []
    return sorted(float(z.real) for z in P.polyroots(d) if abs(z.imag) < 1e-9 and lo < z.real < hi)


def _check_tail(E, shift, lam, L):
    """Mass of exp(-(E - shift)/lam) beyond +-L relative to the mass inside."""
    def f(q):
        return np.exp(-(P.polyval(q, E) - shift) / lam)
    inner, _ = quad(f, -L, L, points=_real_critical_points(E, -L, L) or None, limit=200)
    right, _ = quad(f, L, np.inf)
    left, _ = quad(f, -np.inf, -L)
    tail = (left + right) / inner
    if not tail < TAIL_TOL:
        raise QuadratureError(f"integrand tail mass {tail:.3e} outside [-{L}, {L}] exceeds {TAIL_TOL:g}")
    return tail


def scalar_self_consistency(m: float, V: ConfiningPotential, alpha: float, lam: float,
                            L: float = DEFAULT_L, check_tail: bool = False) -> float:
    """Phi(m): mean of exp(-(V(q) + alpha (q - m)^2 / 2) / lam) on [-L, L]."""
    if not (alpha > 0 and lam > 0):
        raise ValueError("alpha and lambda must be positive")
    E = _tilted_exponent(V, alpha, m)
    crit = _real_critical_points(E, -L, L)
    cand = np.array([-L, L, *crit])
    shift = float(np.min(P.polyval(cand, E)))
    if check_tail:
        _check_tail(E, shift, lam, L)

    def w(q):
        return np.exp(-(P.polyval(q, E) - shift) / lam)

    pts = crit or None
    Z, ez = quad(w, -L, L, points=pts, limit=200, epsabs=QUAD_EPSABS, epsrel=1e-13, full_output=1)[:2]
    N, en = quad(lambda q: q * w(q), -L, L, points=pts, limit=200, epsabs=QUAD_EPSABS, epsrel=1e-13,
                 full_output=1)[:2]
    if not (np.isfinite(Z) and Z > 0) or ez > 1e-8 * Z or en > 1e-8 * max(Z, abs(N)):
        raise QuadratureError(
            f"quadrature on [-{L}, {L}] did not converge for m = {m:g}, lambda = {lam:g} "
            f"(Z = {Z:g} +- {ez:.2e}, N = {N:g} +- {en:.2e})")
    return N / Z


def scalar_map_vector(ms, V: ConfiningPotential, alpha: float, lam: float, L: float = DEFAULT_L) -> np.ndarray:
    """Phi on an array of means with one vector-valued adaptive quadrature."""
    ms = np.asarray(ms, dtype=float)
    qs = np.linspace(-L, L, 4001)
    Vq = P.polyval(qs, V.array)
    # per-m shift: sampled minimum, refined through the exact critical points
    shifts = np.array([min(np.min(Vq + alpha * (qs - m) ** 2 / 2),
                           *(P.polyval(c, _tilted_exponent(V, alpha, m))
                             for c in _real_critical_points(_tilted_exponent(V, alpha, m), -L, L)))
                       for m in ms])

    def integrand(q):
        e = np.exp(-(P.polyval(q, V.array) + alpha * (q - ms) ** 2 / 2 - shifts) / lam)
        return np.concatenate([e, q * e])

    pts = _real_critical_points(V.array, -L, L)
    val, err = quad_vec(integrand, -L, L, epsabs=QUAD_EPSABS, epsrel=1e-13, points=pts or None, limit=20000)
    n = ms.size
    Z, N = val[:n], val[n:]
    if not np.all(Z > 0) or err > 1e-8:
        raise QuadratureError(f"vector quadrature on [-{L}, {L}] failed at lambda = {lam:g} (err {err:.2e})")
    return N / Z


def var_nu0(V: ConfiningPotential, alpha: float, lam: float, L: float = DEFAULT_L) -> float:
    """Variance of nu_0 ~ exp(-(V + alpha q^2 / 2) / lam)."""
    E = _tilted_exponent(V, alpha, 0.0)
    crit = _real_critical_points(E, -L, L)
    shift = float(np.min(P.polyval(np.array([-L, L, *crit]), E)))

    def w(q):
        return np.exp(-(P.polyval(q, E) - shift) / lam)

    pts = crit or None
    Z = quad(w, -L, L, points=pts, limit=200, epsabs=QUAD_EPSABS)[0]
    m1 = quad(lambda q: q * w(q), -L, L, points=pts, limit=200, epsabs=QUAD_EPSABS)[0] / Z
    m2 = quad(lambda q: q * q * w(q), -L, L, points=pts, limit=200, epsabs=QUAD_EPSABS)[0] / Z
    return m2 - m1 * m1


def default_m_max(V: ConfiningPotential) -> float:
    crit = [abs(z.real) for z in P.polyroots(poly_derivative(V.array)) if abs(z.imag) < 1e-9]
    return (max(crit) if crit else 0.0) + 2.0


def find_branches(V: ConfiningPotential, alpha: float, lam: float, m_max: float | None = None,
                  tol: float = 1e-10, L: float = DEFAULT_L) -> list[float]:
    """Sorted roots of m = Phi(m) in [-m_max, m_max].

    Sign changes of m - Phi(m) are located on 2048 uniform nodes and refined by
    bracketing root finding.  For even V only m >= 0 is scanned, 0 is a root by
    symmetry, and the negative roots are mirror images.
    """
    if m_max is None:
        m_max = default_m_max(V)
    even = all(c == 0.0 for c in V.coeffs[1::2])
    nodes = np.linspace(-m_max, m_max, SCAN_NODES)
    if even:
        nodes = nodes[nodes > 0]
    f = nodes - scalar_map_vector(nodes, V, alpha, lam, L)

    def g(m):
        return m - scalar_self_consistency(m, V, alpha, lam, L)

    roots = [0.0] if even else []
    for k in range(f.size - 1):
        a, b = nodes[k], nodes[k + 1]
        fa, fb = f[k], f[k + 1]
        if fa == 0.0:
            r = a
        elif fa * fb < 0:
            r = brentq(g, a, b, xtol=1e-15, rtol=1e-15)
        else:
            continue
        if abs(g(r)) > tol:
            raise QuadratureError(f"root refinement stalled at m = {r:g}: residual {abs(g(r)):.2e}")
        roots.append(float(r))
    if even:
        roots += [-r for r in roots if r > 0]
    roots.sort()
    dedup: list[float] = []
    for r in roots:
        if not dedup or r - dedup[-1] > 1e-8:
            dedup.append(r)
    return dedup


def scalar_branch(m: float, V: ConfiningPotential, alpha: float, lam: float) -> StationaryBranch:
    return StationaryBranch(lam, "scalar", abs(m - scalar_self_consistency(m, V, alpha, lam)), 0, True, m=m)


def critical_lambda_oracle(V: ConfiningPotential, alpha: float, lo: float, hi: float) -> float:
    """Root of alpha Var_nu0(q) = lam, i.e. Phi'(0) = 1."""
    return brentq(lambda lam: alpha * var_nu0(V, alpha, lam) - lam, lo, hi, xtol=1e-12)


def phase_scan(V: ConfiningPotential, alpha: float, lam_lo: float, lam_hi: float,
               width_tol: float = 1e-3, n_grid: int = 20) -> PhaseScanResult:
    """Branch counts on a lambda grid, then bisection of the count change.

    Bisection runs on the branch count (more branches below, one above) until
    the bracket is narrower than ``width_tol``; the bracket is reported next to
    the independent root of alpha Var_nu0 = lam.
    """
    if not lam_lo < lam_hi:
        raise ValueError("need lam_lo < lam_hi")
    lams = np.linspace(lam_lo, lam_hi, n_grid)
    roots = [find_branches(V, alpha, lam) for lam in lams]
    counts = np.array([len(r) for r in roots])
    if counts[0] == counts[-1]:
        raise ValueError(f"branch count is {counts[0]} at both lambda = {lam_lo:g} and {lam_hi:g}; "
                         "no transition to bracket")
    k = int(np.flatnonzero(counts != counts[0])[0])
    a, b = float(lams[k - 1]), float(lams[k])
    c_lo = counts[0]
    steps = 0
    history = [(a, b)]
    while b - a > width_tol:
        mid = 0.5 * (a + b)
        if len(find_branches(V, alpha, mid)) == c_lo:
            a = mid
        else:
            b = mid
        steps += 1
        history.append((a, b))
    oracle = critical_lambda_oracle(V, alpha, lam_lo, lam_hi)
    return PhaseScanResult(lams, counts, roots, (a, b), oracle, steps, history)


def write_phase_csv(result: PhaseScanResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "branch_count", "m_roots"])
        for lam, c, r in zip(result.lambdas, result.counts, result.roots):
            w.writerow([repr(float(lam)), int(c), ";".join(repr(float(x)) for x in r)])
