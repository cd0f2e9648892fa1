"""Fused numba loops for the PDE step.

They mirror ``VFPSolver.substep_transport_q`` and ``substep_fokker_planck_p``
operation by operation; the numpy versions stay as the reference.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _bern(x):
    if abs(x) < 1e-8:
        return 1.0 - 0.5 * x
    if x > 700.0:
        return x * math.exp(-x)
    return x / math.expm1(x)


@njit(cache=True)
def _minmod(a, b):
    return max(min(a, b), 0.0) + min(max(a, b), 0.0)


@njit(cache=True)
def transport_q(r, W, p, lam, dt, dq, muscl):
    """Explicit q-flux update; returns (new values, number of capped faces)."""
    nq, n_p = r.shape
    out = r.copy()
    cap = dq / dt
    capped = 0
    k = dt / dq
    nf = nq - 1
    # per-face Gibbs factors, shared by every p-row
    e_pos = np.empty(nf)      # exp(-dW / 2 lam), velocity factor for p > 0
    e_neg = np.empty(nf)
    ratio_w = np.empty(nf)    # M_i / M_{i+1} = exp(dW / lam)
    for i in range(nf):
        x = (W[i + 1] - W[i]) / (2 * lam)
        e_pos[i] = math.exp(-x)
        e_neg[i] = math.exp(x)
        ratio_w[i] = math.exp(min(max(2 * x, -700.0), 700.0))
    fwd = np.empty(nf)        # h_{i+1} / h_i - 1
    bwd = np.empty(nf)        # h_i / h_{i+1} - 1
    lo, hi = math.exp(-700.0), math.exp(700.0)
    for j in range(n_p):
        pj = p[j]
        if muscl:
            for i in range(nf):
                t = max(r[i + 1, j], 1e-300) / max(r[i, j], 1e-300) * ratio_w[i]
                t = min(max(t, lo), hi)
                fwd[i] = t - 1.0
                bwd[i] = 1.0 / t - 1.0
        for i in range(nf):
            v = pj * (e_pos[i] if pj > 0 else e_neg[i])
            if abs(v) > cap:
                capped += 1
                v = min(max(v, -cap), cap)
            if pj > 0:
                up = r[i, j]
                if muscl and i > 0:
                    up *= 1.0 + 0.5 * _minmod(fwd[i], -bwd[i - 1])
            else:
                up = r[i + 1, j]
                if muscl and i < nf - 1:
                    up *= 1.0 + 0.5 * _minmod(bwd[i], -fwd[i + 1])
            # a cell cannot send out more than it holds (only MUSCL can get here: fac <= 1.5)
            c = k * v
            held = r[i, j] if pj > 0 else r[i + 1, j]
            if abs(c) * up > held:
                up = held / abs(c)
            flux = c * up
            out[i, j] -= flux
            out[i + 1, j] += flux
    return out, capped


@njit(cache=True)
def fokker_planck_p(r, phi, B_plus, B_minus, R, lam, dt, dp):
    """Implicit p-step: per column, rates from the Gibbs-weighted SG flux and a Thomas solve.

    Returns (values, ok); ok is False on a zero pivot or non-finite output.
    """
    nq, n_p = r.shape
    out = np.empty_like(r)
    c = lam / dp
    k = dt / dp
    a = np.empty(n_p - 1)
    b = np.empty(n_p - 1)
    cp = np.empty(n_p)
    dd = np.empty(n_p)
    for i in range(nq):
        for j in range(n_p - 1):
            pe = (dp / lam) * phi[i] * R[j] / B_plus[j]
            a[j] = c * B_plus[j] * _bern(-pe)
            b[j] = c * B_minus[j] * _bern(pe)
        # row j: -k a_{j-1} x_{j-1} + (1 + k a_j + k b_{j-1}) x_j - k b_j x_{j+1} = r_j
        diag = 1.0 + k * a[0]
        if diag == 0.0:
            return out, False
        cp[0] = -k * b[0] / diag
        dd[0] = r[i, 0] / diag
        for j in range(1, n_p):
            lo = -k * a[j - 1]
            dj = 1.0 + k * b[j - 1]
            if j < n_p - 1:
                dj += k * a[j]
            m = dj - lo * cp[j - 1]
            if m == 0.0:
                return out, False
            cp[j] = -k * b[j] / m if j < n_p - 1 else 0.0
            dd[j] = (r[i, j] - lo * dd[j - 1]) / m
        out[i, n_p - 1] = dd[n_p - 1]
        for j in range(n_p - 2, -1, -1):
            out[i, j] = dd[j] - cp[j] * out[i, j + 1]
        for j in range(n_p):
            if not math.isfinite(out[i, j]):
                return out, False
    return out, True
