"""Compiled inner loops for the geodesic and variational flow.

The profile is passed as a flat parameter pack so the kernels stay
signature-stable:

    pack = (alpha, c2, c4, r0, breaks, ca, ca1, ca2)

where breaks are the bridge breakpoints and ca/ca1/ca2 the power-basis
(PPoly) coefficients of a, a', a'' on the bridge, shape (order, nseg).
Requires numba; `quasibeam.flow` falls back to plain numpy loops when this
module fails to import.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _a_jet(x, alpha, c2, c4, r0, breaks, ca, ca1, ca2):
    """(a, a', a'') of the even profile at x = |r|."""
    if x <= 1.0:
        x2 = x * x
        return (
            alpha + c2 * x2 + c4 * x2 * x2,
            2.0 * c2 * x + 4.0 * c4 * x * x2,
            2.0 * c2 + 12.0 * c4 * x2,
        )
    if x >= r0:
        s2 = x * x - 1.0
        s = np.sqrt(s2)
        s1 = x / s
        sdd = -1.0 / (s2 * s)
        u = 1.0 / (x * x)
        u1 = -2.0 * u / x
        u2 = 6.0 * u * u
        return (
            s * u,
            s1 * u + s * u1,
            sdd * u + 2.0 * s1 * u1 + s * u2,
        )
    i = 0
    for j in range(breaks.size - 2, 0, -1):
        if x >= breaks[j]:
            i = j
            break
    dx = x - breaks[i]
    a0 = 0.0
    for k in range(ca.shape[0]):
        a0 = a0 * dx + ca[k, i]
    a1 = 0.0
    for k in range(ca1.shape[0]):
        a1 = a1 * dx + ca1[k, i]
    a2 = 0.0
    for k in range(ca2.shape[0]):
        a2 = a2 * dx + ca2[k, i]
    return a0, a1, a2


@njit(cache=True, inline="always")
def _warp_jet(r, alpha, c2, c4, r0, breaks, ca, ca1, ca2):
    """(c, c', c'') at signed radius r; exact closed forms on the ends."""
    x = abs(r)
    if x >= r0:
        u = 1.0 / (x * x)
        sgn = 1.0 if r >= 0.0 else -1.0
        return u, -2.0 * sgn * u / x, 6.0 * u * u
    a0, a1, a2 = _a_jet(x, alpha, c2, c4, r0, breaks, ca, ca1, ca2)
    if r < 0.0:
        a1 = -a1
    b = r * a0
    b1 = a0 + r * a1
    b2 = 2.0 * a1 + r * a2
    return 1.0 - b * b, -2.0 * b * b1, -2.0 * (b1 * b1 + b * b2)


@njit(cache=True, inline="always")
def _rhs(z, out, alpha, c2, c4, r0, breaks, ca, ca1, ca2):
    c0, c1, _ = _warp_jet(z[0], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
    out[0] = 2.0 * z[2]
    out[1] = 2.0 * c0 * z[3]
    out[2] = -c1 * z[3] * z[3]
    out[3] = 0.0


@njit(cache=True)
def flow_rk4(z0, t_final, n_steps, record_every, alpha, c2, c4, r0, breaks, ca, ca1, ca2):
    """RK4 the geodesic flow for a batch z0 (B, 4); returns (ts, states).

    Records every record_every-th step (which must divide n_steps), so the
    output has n_steps // record_every + 1 snapshots.
    """
    B = z0.shape[0]
    hstep = t_final / n_steps
    n_rec = n_steps // record_every + 1
    ts = np.empty(n_rec)
    states = np.empty((n_rec, B, 4))
    y = z0.copy()
    ts[0] = 0.0
    states[0] = y
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    for i in range(1, n_steps + 1):
        for b in range(B):
            zb = y[b]
            _rhs(zb, k1, alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tmp[m] = zb[m] + 0.5 * hstep * k1[m]
            _rhs(tmp, k2, alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tmp[m] = zb[m] + 0.5 * hstep * k2[m]
            _rhs(tmp, k3, alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tmp[m] = zb[m] + hstep * k3[m]
            _rhs(tmp, k4, alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                zb[m] = zb[m] + (hstep / 6.0) * (
                    k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]
                )
        if i % record_every == 0:
            j = i // record_every
            ts[j] = i * hstep
            states[j] = y
    return ts, states


@njit(cache=True, inline="always")
def _var_rhs(z, D, dz, dD, alpha, c2, c4, r0, breaks, ca, ca1, ca2):
    c0, c1, c2v = _warp_jet(z[0], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
    xt = z[3]
    dz[0] = 2.0 * z[2]
    dz[1] = 2.0 * c0 * xt
    dz[2] = -c1 * xt * xt
    dz[3] = 0.0
    for j in range(4):
        dD[0, j] = 2.0 * D[2, j]
        dD[1, j] = 2.0 * c1 * xt * D[0, j] + 2.0 * c0 * D[3, j]
        dD[2, j] = -c2v * xt * xt * D[0, j] - 2.0 * c1 * xt * D[3, j]
        dD[3, j] = 0.0


@njit(cache=True)
def variational_rk4(
    z0, t_final, n_steps, record_every, alpha, c2, c4, r0, breaks, ca, ca1, ca2
):
    """RK4 the flow and its differential jointly for a batch z0 (B, 4).

    Returns (ts, states, mats) with mats[0] the identity.
    """
    B = z0.shape[0]
    hstep = t_final / n_steps
    n_rec = n_steps // record_every + 1
    ts = np.empty(n_rec)
    states = np.empty((n_rec, B, 4))
    mats = np.empty((n_rec, B, 4, 4))
    z = z0.copy()
    D = np.empty((B, 4, 4))
    for b in range(B):
        for i in range(4):
            for j in range(4):
                D[b, i, j] = 1.0 if i == j else 0.0
    ts[0] = 0.0
    states[0] = z
    mats[0] = D
    kz = np.empty((4, 4))
    kD = np.empty((4, 4, 4))
    tz = np.empty(4)
    tD = np.empty((4, 4))
    for i in range(1, n_steps + 1):
        for b in range(B):
            zb = z[b]
            Db = D[b]
            _var_rhs(zb, Db, kz[0], kD[0], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tz[m] = zb[m] + 0.5 * hstep * kz[0, m]
                for nn in range(4):
                    tD[m, nn] = Db[m, nn] + 0.5 * hstep * kD[0, m, nn]
            _var_rhs(tz, tD, kz[1], kD[1], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tz[m] = zb[m] + 0.5 * hstep * kz[1, m]
                for nn in range(4):
                    tD[m, nn] = Db[m, nn] + 0.5 * hstep * kD[1, m, nn]
            _var_rhs(tz, tD, kz[2], kD[2], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                tz[m] = zb[m] + hstep * kz[2, m]
                for nn in range(4):
                    tD[m, nn] = Db[m, nn] + hstep * kD[2, m, nn]
            _var_rhs(tz, tD, kz[3], kD[3], alpha, c2, c4, r0, breaks, ca, ca1, ca2)
            for m in range(4):
                zb[m] = zb[m] + (hstep / 6.0) * (
                    kz[0, m] + 2.0 * kz[1, m] + 2.0 * kz[2, m] + kz[3, m]
                )
                for nn in range(4):
                    Db[m, nn] = Db[m, nn] + (hstep / 6.0) * (
                        kD[0, m, nn]
                        + 2.0 * kD[1, m, nn]
                        + 2.0 * kD[2, m, nn]
                        + kD[3, m, nn]
                    )
        if i % record_every == 0:
            j = i // record_every
            ts[j] = i * hstep
            states[j] = z
            mats[j] = D
    return ts, states, mats
