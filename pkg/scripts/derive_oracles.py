"""Recompute the frozen reference values in tests/oracles.py.

Uses mpmath and sympy only, never the package itself.
"""

import math

import mpmath as mp
import sympy as sp

mp.mp.dps = 30


def phi(m, lam):
    def f(q):
        return mp.exp(-(q ** 4 / 4 - q ** 2 / 2 + (q - m) ** 2 / 2) / lam)
    pts = [-12, -2, -1, 0, 1, 2, 12]
    return mp.quad(lambda q: q * f(q), pts) / mp.quad(f, pts)


def main():
    q, x, r = sp.symbols("q x r")
    conv = sp.integrate((q - x) ** 4 * sp.exp(-x ** 2 / 2) / sp.sqrt(2 * sp.pi), (x, -sp.oo, sp.oo))
    print("GAUSS_QUARTIC_CONV", sp.Poly(sp.expand(conv), q).all_coeffs()[::-1])
    rr = sp.symbols("rr", positive=True)
    print("FULL_PLANE_CD", sp.N(-2 / sp.E * 2 * sp.pi * sp.integrate(rr * sp.exp(-rr / 2), (rr, 0, sp.oo)), 15))
    crit = sp.solve(sp.diff(q ** 4 / 4 - q ** 2, q), q)
    print("DOUBLE_WELL_VMIN", min(sp.N(q ** 4 / 4 - q ** 2).subs(q, c) for c in crit))
    lam_c = mp.findroot(lambda lam: mp.quad(lambda s: s * s * mp.exp(-s ** 4 / (4 * lam)), [-12, 0, 12])
                        / mp.quad(lambda s: mp.exp(-s ** 4 / (4 * lam)), [-12, 0, 12]) - lam, 0.45)
    print("LAMBDA_C", lam_c, "closed form", 4 * math.gamma(0.75) ** 2 / math.gamma(0.25) ** 2)
    for lam in (0.3, 0.1, 0.05):
        print("M_PLUS", lam, mp.findroot(lambda m: m - phi(m, lam), 0.9))


if __name__ == "__main__":
    main()
