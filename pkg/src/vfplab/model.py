"""Polynomial confining/interaction potentials and the exact mean-field convolution.

Potentials are stored as ascending coefficient arrays, ``coeffs[k]`` multiplying
``q**k``.  Because both potentials are polynomials, the convolution ``F * rho``
only depends on finitely many q-moments of ``rho`` and is evaluated exactly by a
binomial expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import polynomial as P

if TYPE_CHECKING:
    from .grid import PhaseDensity

__all__ = [
    "ConfiningPotential",
    "InteractionPotential",
    "Verdict",
    "AssumptionReport",
    "ASSUMPTION_IDS",
    "eval_potential",
    "grad_potential",
    "convolve_interaction",
    "check_assumptions",
    "double_well",
    "quadratic_interaction",
]

ASSUMPTION_IDS = ("M-1", "M-2", "M-3", "M-4", "M-5", "M-6", "M-7")

HOLDS = "holds"
FAILS = "fails"
NOT_CHECKABLE = "not-checkable"


def _trim(coeffs) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    if not c:
        c = [0.0]
    if not all(np.isfinite(c)):
        raise ValueError(f"non-finite coefficient in {coeffs!r}")
    return tuple(c)


def poly_derivative(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.size <= 1:
        return np.zeros(1)
    return P.polyder(c)


@dataclass(frozen=True)
class ConfiningPotential:
    """V(q) = sum_k coeffs[k] q**k in one space dimension."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = _trim(self.coeffs)
        object.__setattr__(self, "coeffs", c)
        deg = len(c) - 1
        if deg < 2 or deg % 2 or c[-1] <= 0:
            raise ValueError(
                "confining potential needs even degree >= 2 and a positive leading "
                f"coefficient, got coefficients {list(c)}"
            )

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    @property
    def gradient_exponent(self) -> float:
        """Exponent m with |V'(q)| <= K (1 + |q|**(2m)), i.e. 2m = deg V - 1."""
        return (self.degree - 1) / 2

    @property
    def gradient_constant(self) -> float:
        """K with |V'(q)| <= K (1 + |q|**(2m)) for every q."""
        return float(sum(abs(k * c) for k, c in enumerate(self.coeffs)))

    def __call__(self, q):
        return eval_potential(self, q)

    def grad(self, q):
        return grad_potential(self, q)

    def hessian(self, q):
        return P.polyval(q, poly_derivative(poly_derivative(self.coeffs)))


@dataclass(frozen=True)
class InteractionPotential:
    """F(q) = G(|q|) with G an even polynomial; ``g_coeffs`` are G's coefficients.

    The empty interaction ``InteractionPotential(())`` (F = 0) is accepted so that
    non-interacting runs can use closed-form Gibbs states.
    """

    g_coeffs: tuple[float, ...] = ()
    convexity_radius: float = 10.0
    convexity_samples: int = 1001

    def __post_init__(self):
        object.__setattr__(self, "g_coeffs", _trim(self.g_coeffs) if len(self.g_coeffs) else (0.0,))

    @property
    def degree(self) -> int:
        if self.is_zero:
            return 0
        return len(self.g_coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.g_coeffs)

    @property
    def is_even(self) -> bool:
        return all(c == 0.0 for c in self.g_coeffs[1::2])

    @property
    def odd_indices(self) -> list[int]:
        return [k for k in range(1, len(self.g_coeffs), 2) if self.g_coeffs[k] != 0.0]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.g_coeffs)

    def __call__(self, x):
        # F(q) = G(|q|); for an even G this is just G(q).
        return P.polyval(np.abs(x), self.array)

    def derivative(self, x):
        """F'(x) in one dimension (equals G'(x) when G is even)."""
        x = np.asarray(x, dtype=float)
        if self.is_even:
            return P.polyval(x, poly_derivative(self.array))
        return np.sign(x) * P.polyval(np.abs(x), poly_derivative(self.array))

    def second_derivative(self, x):
        return P.polyval(x, poly_derivative(poly_derivative(self.array)))

    def convexity_witness(self) -> float | None:
        """A sample point where G'' < 0, or None when G'' >= 0 on every sample."""
        R = self.convexity_radius
        xs = np.linspace(-R, R, self.convexity_samples)
        g2 = self.second_derivative(xs)
        bad = np.flatnonzero(g2 < 0)
        return None if bad.size == 0 else float(xs[bad[0]])


def double_well() -> ConfiningPotential:
    """V(q) = q^4/4 - q^2/2."""
    return ConfiningPotential((0.0, 0.0, -0.5, 0.0, 0.25))


def quadratic_interaction(alpha: float = 1.0) -> InteractionPotential:
    """F(q) = alpha q^2 / 2."""
    return InteractionPotential((0.0, 0.0, alpha / 2))


def eval_potential(V: ConfiningPotential, q):
    """V(q) by Horner evaluation; accepts scalars or arrays."""
    out = P.polyval(q, V.array)
    return float(out) if np.ndim(out) == 0 else out


def grad_potential(V: ConfiningPotential, q):
    """V'(q).  Callers negate it to obtain the confining force."""
    out = P.polyval(q, poly_derivative(V.array))
    return float(out) if np.ndim(out) == 0 else out


def convolve_interaction(F: InteractionPotential, q_moments) -> np.ndarray:
    """Coefficients (ascending) of q -> (F * rho)(q) from the q-moments of rho.

    (F * rho)(q) = sum_k g_k E[(q - X)^k] = sum_k g_k sum_j C(k, j) q^j (-1)^(k-j) M_(k-j).

    The result is linear in ``q_moments``, so any finite measure works; for a
    probability M_0 = 1.
    """
    g = F.array
    deg = F.degree
    M = np.asarray(q_moments, dtype=float)
    if M.ndim != 1 or M.size < deg + 1:
        raise ValueError(
            f"convolution with a degree-{deg} interaction needs {deg + 1} moments "
            f"M_0..M_{deg}, got {M.size}"
        )
    out = np.zeros(max(deg, 0) + 1)
    for k in range(deg + 1):
        gk = g[k]
        if gk == 0.0:
            continue
        for j in range(k + 1):
            sign = -1.0 if (k - j) % 2 else 1.0
            out[j] += gk * comb(k, j) * sign * M[k - j]
    return out


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: str = ""

    @property
    def holds(self) -> bool:
        return self.status == HOLDS


@dataclass
class AssumptionReport:
    verdicts: dict[str, Verdict]
    gradient_exponent: float
    gradient_constant: float
    interaction_half_degree: int
    r: float
    quartic_constants: tuple[float, float] | None = None
    extras: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        assert tuple(self.verdicts) == ASSUMPTION_IDS

    def holds(self, ids=ASSUMPTION_IDS[:5]) -> bool:
        return all(self.verdicts[i].holds for i in ids)

    def failing(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if v.status == FAILS]

    def to_dict(self) -> dict:
        return {
            "verdicts": {k: {"status": v.status, "witness": v.witness} for k, v in self.verdicts.items()},
            "gradient_exponent_m": self.gradient_exponent,
            "gradient_constant_K": self.gradient_constant,
            "interaction_half_degree_n": self.interaction_half_degree,
            "r": self.r,
            "quartic_constants_C4_C2": list(self.quartic_constants) if self.quartic_constants else None,
            **self.extras,
        }

    def format(self) -> str:
        lines = [f"{k}: {v.status}" + (f"  ({v.witness})" if v.witness else "") for k, v in self.verdicts.items()]
        lines.append(f"m = {self.gradient_exponent:g}, K = {self.gradient_constant:g}, "
                     f"n = {self.interaction_half_degree}, r = {self.r:g}")
        return "\n".join(lines)


def _poly_min(coeffs) -> tuple[float, float]:
    """Global minimum (value, location) of a polynomial bounded below."""
    c = np.asarray(coeffs, dtype=float)
    d = poly_derivative(c)
    cands = [0.0]
    if d.size > 1 and np.any(d != 0):
        r = P.polyroots(d)
        cands += [z.real for z in r if abs(z.imag) <= 1e-9 * (1 + abs(z))]
    cands = np.asarray(cands)
    vals = P.polyval(cands, c)
    k = int(np.argmin(vals))
    return float(vals[k]), float(cands[k])


def _quartic_lower_bound(V: ConfiningPotential) -> tuple[float, float] | None:
    """(C4, C2) > 0 with V(q) >= C4 q^4 - C2 q^2 for all q, or None."""
    c = V.coeffs
    if V.degree < 4:
        return None
    # Near q = 0 the bound needs V(0) > 0, or V(0) = V'(0) = 0.
    if c[0] < 0 or (c[0] == 0 and c[1] != 0):
        return None
    C4 = c[-1] / 2 if V.degree == 4 else min(1.0, c[-1])
    C2 = 1.0
    while C2 < 1e12:
        diff = np.array(c, dtype=float)
        diff[4] -= C4
        diff[2] += C2
        low, _ = _poly_min(diff)
        if low >= -1e-12 * (1 + abs(c[0])):
            return C4, C2
        C2 *= 2
    return None


def check_assumptions(V: ConfiningPotential, F: InteractionPotential,
                      rho0: PhaseDensity | None = None) -> AssumptionReport:
    """Decide (M-1)..(M-5) from coefficients, and (M-6)/(M-7) when rho0 is given."""
    v: dict[str, Verdict] = {}
    v["M-1"] = Verdict(HOLDS, "polynomials are smooth")

    deg = V.degree
    lead = V.coeffs[-1]
    if deg % 2 == 0 and deg >= 2 and lead > 0:
        v["M-2"] = Verdict(HOLDS, f"deg V = {deg} even, leading coefficient {lead:g} > 0")
    else:
        v["M-2"] = Verdict(FAILS, f"deg V = {deg}, leading coefficient {lead:g}")

    C = _quartic_lower_bound(V)
    if C is None:
        why = "no quartic growth" if deg < 4 else "no C4, C2 > 0 fit the coefficients"
        v["M-3"] = Verdict(FAILS, why)
    else:
        v["M-3"] = Verdict(HOLDS, f"C4 = {C[0]:g}, C2 = {C[1]:g}")

    n = F.degree // 2
    if F.is_zero:
        v["M-4"] = Verdict(FAILS, "empty interaction (deg G = 0 < 2)")
    elif not F.is_even:
        v["M-4"] = Verdict(FAILS, f"odd coefficient at index {F.odd_indices[0]}")
    elif F.degree < 2:
        v["M-4"] = Verdict(FAILS, f"deg G = {F.degree} < 2")
    else:
        gmin, at = _poly_min(F.array)
        if F.g_coeffs[0] < 0 or gmin < -1e-12:
            v["M-4"] = Verdict(FAILS, f"G({at:g}) = {gmin:g} < 0")
        else:
            v["M-4"] = Verdict(HOLDS, f"G even, nonnegative, deg G = {F.degree}")

    w = F.convexity_witness()
    if w is None:
        v["M-5"] = Verdict(HOLDS, f"G'' >= 0 on {F.convexity_samples} samples of "
                                  f"[-{F.convexity_radius:g}, {F.convexity_radius:g}]")
    else:
        v["M-5"] = Verdict(FAILS, f"G''({w:g}) = {float(F.second_derivative(w)):g} < 0")

    m = V.gradient_exponent
    r = max(m, n)
    extras: dict[str, float] = {}
    if rho0 is None:
        v["M-6"] = Verdict(NOT_CHECKABLE, "no initial density supplied")
        v["M-7"] = Verdict(NOT_CHECKABLE, "no initial density supplied")
    else:
        from .grid import p_moments, q_moments, entropy_integral

        order = int(np.ceil(8 * r * r))
        mq = q_moments(rho0, order)[order]
        mp = p_moments(rho0, 2)[2]
        extras.update({"q_moment_order": order, "q_moment": float(mq), "p_moment_2": float(mp)})
        ok6 = np.isfinite(mq) and np.isfinite(mp)
        v["M-6"] = Verdict(HOLDS if ok6 else FAILS,
                           f"M_{order}(q) = {mq:.6g}, M_2(p) = {mp:.6g}")
        S = entropy_integral(rho0)
        extras["entropy"] = float(-S)
        ok7 = bool(np.all(rho0.values >= 0)) and np.isfinite(S)
        v["M-7"] = Verdict(HOLDS if ok7 else FAILS, f"entropy S(rho0) = {-S:.6g}")

    return AssumptionReport(v, m, V.gradient_constant, n, r, C, extras)
