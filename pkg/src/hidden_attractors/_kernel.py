"""Compiled Dormand-Prince 5(4) stepper with dense output and guard root finding.

The kernel integrates one smooth mode (fixed stick/slip assignment per
switching surface) until it reaches ``t_end``, locates a guard root, or fills
its sample buffer. All mode logic lives in Python; the vector fields come from
:mod:`hidden_attractors._fields`, selected by the model id ``mid``.
"""

import math

import numpy as np
from numba import njit

from ._fields import assemble, balance, slip

# status codes returned by advance()
DONE = 0
EVENT = 1
IMMEDIATE = 2
BUFFER_FULL = 3
UNDERFLOW = 4
NONFINITE = 5

A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0,
)
A71, A73, A74, A75, A76 = (
    35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0,
)
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0,
    22.0 / 525.0, -1.0 / 40.0,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0,
)


@njit(cache=True)
def deriv(mid, y, mode, p, sidx, fr, bal, dy):
    m = sidx.size
    if m > 0:
        balance(mid, y, p, bal)
    for j in range(m):
        if mode[j] == 0:
            fr[j] = bal[j]
        else:
            fr[j] = slip(mid, j, y[sidx[j]], float(mode[j]), p)
    assemble(mid, y, p, fr, dy)
    for j in range(m):
        if mode[j] == 0:
            dy[sidx[j]] = 0.0


@njit(cache=True)
def guards(mid, y, mode, p, sidx, sref, slo, shi, bal, g):
    m = sidx.size
    if m == 0:
        return
    balance(mid, y, p, bal)
    for j in range(m):
        if mode[j] == 0:
            g[j] = min(bal[j] - slo[j], shi[j] - bal[j])
        else:
            g[j] = mode[j] * (y[sidx[j]] - sref[j])


@njit(cache=True)
def _dense(rc, theta, out):
    t1 = 1.0 - theta
    for i in range(out.size):
        out[i] = rc[0, i] + theta * (
            rc[1, i] + t1 * (rc[2, i] + theta * (rc[3, i] + t1 * rc[4, i]))
        )


@njit(cache=True)
def advance(mid, y0, t0, t_end, mode, p,
            sidx, sref, slo, shi, armed,
            rtol, atol, h, hmax, event_tol, sample_dt,
            out_t, out_y, gmax, counters):
    """Integrate the smooth mode ``mode`` from ``(t0, y0)``.

    Returns ``(status, n_samples, t, y, h, surface)``. ``armed`` and ``gmax``
    are updated in place; ``counters`` accumulates accepted/rejected steps
    and right-hand-side evaluations.
    """
    n = y0.size
    m = sidx.size
    y = y0.copy()
    t = t0
    k = np.empty((7, n))
    ys = np.empty(n)
    ynew = np.empty(n)
    err = np.empty(n)
    rc = np.empty((5, n))
    fr = np.zeros(max(m, 1))
    bal = np.empty(max(m, 1))
    g_old = np.empty(max(m, 1))
    g_new = np.empty(max(m, 1))
    g_mid = np.empty(max(m, 1))
    yd = np.empty(n)
    nout = 0
    cap = out_t.size
    ev_j = -1

    deriv(mid, y, mode, p, sidx, fr, bal, k[0])
    counters[2] += 1
    guards(mid, y, mode, p, sidx, sref, slo, shi, bal, g_old)
    if sample_dt > 0.0:
        # grid times are k * sample_dt exactly, never accumulated
        k_sample = math.floor(t / sample_dt) + 1.0
        next_sample = k_sample * sample_dt
    else:
        k_sample = 0.0
        next_sample = 0.0

    while True:
        if sample_dt > 0.0 and nout + h / sample_dt + 2.0 > cap:
            return BUFFER_FULL, nout, t, y, h, -1
        remaining = t_end - t
        if remaining <= 1e-15 * max(1.0, abs(t_end)):
            return DONE, nout, t_end, y, h, -1
        if h > hmax:
            h = hmax
        last = False
        if h >= remaining * (1.0 - 1e-12):
            h = remaining
            last = True

        for i in range(n):
            ys[i] = y[i] + h * A21 * k[0, i]
        deriv(mid, ys, mode, p, sidx, fr, bal, k[1])
        for i in range(n):
            ys[i] = y[i] + h * (A31 * k[0, i] + A32 * k[1, i])
        deriv(mid, ys, mode, p, sidx, fr, bal, k[2])
        for i in range(n):
            ys[i] = y[i] + h * (A41 * k[0, i] + A42 * k[1, i] + A43 * k[2, i])
        deriv(mid, ys, mode, p, sidx, fr, bal, k[3])
        for i in range(n):
            ys[i] = y[i] + h * (A51 * k[0, i] + A52 * k[1, i] + A53 * k[2, i]
                                + A54 * k[3, i])
        deriv(mid, ys, mode, p, sidx, fr, bal, k[4])
        for i in range(n):
            ys[i] = y[i] + h * (A61 * k[0, i] + A62 * k[1, i] + A63 * k[2, i]
                                + A64 * k[3, i] + A65 * k[4, i])
        deriv(mid, ys, mode, p, sidx, fr, bal, k[5])
        for i in range(n):
            ynew[i] = y[i] + h * (A71 * k[0, i] + A73 * k[2, i] + A74 * k[3, i]
                                  + A75 * k[4, i] + A76 * k[5, i])
        deriv(mid, ynew, mode, p, sidx, fr, bal, k[6])
        counters[2] += 6

        finite = True
        err_norm = 0.0
        for i in range(n):
            if not math.isfinite(ynew[i]) or not math.isfinite(k[6, i]):
                finite = False
            err[i] = h * (E1 * k[0, i] + E3 * k[2, i] + E4 * k[3, i] + E5 * k[4, i]
                          + E6 * k[5, i] + E7 * k[6, i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err_norm += (err[i] / sc) ** 2
        err_norm = math.sqrt(err_norm / n)
        if not finite:
            if h < 1e-12 * max(1.0, abs(t)):
                return NONFINITE, nout, t, y, h, -1
            counters[1] += 1
            h *= 0.25
            continue

        if err_norm > 1.0:
            counters[1] += 1
            h *= max(0.2, 0.9 * err_norm ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                return UNDERFLOW, nout, t, y, h, -1
            continue

        # accepted step: build the continuous extension
        for i in range(n):
            dy1 = ynew[i] - y[i]
            bspl = h * k[0, i] - dy1
            rc[0, i] = y[i]
            rc[1, i] = dy1
            rc[2, i] = bspl
            rc[3, i] = dy1 - h * k[6, i] - bspl
            rc[4, i] = h * (D1 * k[0, i] + D3 * k[2, i] + D4 * k[3, i] + D5 * k[4, i]
                            + D6 * k[5, i] + D7 * k[6, i])

        guards(mid, ynew, mode, p, sidx, sref, slo, shi, bal, g_new)

        # earliest guard root in this step; lower surface index wins ties
        theta_ev = 2.0
        for j in range(m):
            if not armed[j]:
                if g_new[j] < -event_tol:
                    return IMMEDIATE, nout, t, y, h, j
                continue
            if g_new[j] > 0.0:
                continue
            a = 0.0
            b = 1.0
            ga = g_old[j]
            gb = g_new[j]
            gb_true = gb  # gb may be halved by the Illinois step
            side = 0
            for _ in range(200):
                if gb_true >= -event_tol:
                    break
                if (b - a) * h <= 1e-15 * max(1.0, abs(t)):
                    break
                th = (a * gb - b * ga) / (gb - ga)
                if not (a < th < b):
                    th = 0.5 * (a + b)
                _dense(rc, th, yd)
                guards(mid, yd, mode, p, sidx, sref, slo, shi, bal, g_mid)
                gt = g_mid[j]
                if gt > 0.0:
                    a = th
                    ga = gt
                    if side == 1:
                        gb *= 0.5
                    side = 1
                else:
                    b = th
                    gb = gt
                    gb_true = gt
                    if side == -1:
                        ga *= 0.5
                    side = -1
            if b < theta_ev:
                theta_ev = b
                ev_j = j

        if ev_j >= 0:
            t_ev = t + theta_ev * h
            if sample_dt > 0.0:
                while next_sample < t_ev and nout < cap:
                    _dense(rc, (next_sample - t) / h, yd)
                    out_t[nout] = next_sample
                    out_y[nout] = yd
                    nout += 1
                    k_sample += 1.0
                    next_sample = k_sample * sample_dt
            _dense(rc, theta_ev, yd)
            counters[0] += 1
            return EVENT, nout, t_ev, yd.copy(), h, ev_j

        t_new = t_end if last else t + h
        if sample_dt > 0.0:
            while next_sample <= t_new and nout < cap:
                if next_sample == t_new:
                    out_y[nout] = ynew
                else:
                    _dense(rc, (next_sample - t) / h, yd)
                    out_y[nout] = yd
                out_t[nout] = next_sample
                nout += 1
                k_sample += 1.0
                next_sample = k_sample * sample_dt
        else:
            out_t[nout] = t_new
            out_y[nout] = ynew
            nout += 1

        for j in range(m):
            if not armed[j] and g_new[j] > 0.0:
                armed[j] = True
            if abs(g_new[j]) > gmax[j]:
                gmax[j] = abs(g_new[j])
            g_old[j] = g_new[j]
        t = t_new
        for i in range(n):
            y[i] = ynew[i]
            k[0, i] = k[6, i]
        counters[0] += 1
        h *= min(5.0, max(0.2, 0.9 * err_norm ** -0.2)) if err_norm > 0 else 5.0
        if nout >= cap - 1:
            return BUFFER_FULL, nout, t, y, h, -1
