"""Compiled vector fields, dispatched on an integer model id.

Dispatching on an id (instead of passing jitted functions around) keeps every
kernel a plain module-level function, so numba's on-disk cache is reused by
worker processes.

Per model three callbacks exist:

``balance(mid, y, p, out)``
    net non-friction torque on each switching body;
``slip(mid, j, omega, s, p)``
    friction of surface ``j`` on the sliding branch with sign ``s``;
``assemble(mid, y, p, fr, dy)``
    state derivative for explicitly given friction torques ``fr``.
"""

import math

from numba import njit

from .core import lower_slip_torque, upper_slip_torque

TORA = 0
DRILL_DC = 1
DRILL_INDUCTION = 2
OSCILLATOR = 3

TWO_PI_3 = 2.0 * math.pi / 3.0


# TORA: J M m l k_theta k k1 u

@njit(cache=True)
def _tora_assemble(y, p, dy):
    J, M, m, l, k_theta, k, k1, u = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    xd = y[1]
    thd = y[3]
    c = math.cos(y[2])
    s = math.sin(y[2])
    a11 = M + m
    a12 = m * l * c
    det = a11 * J - a12 * a12
    r1 = m * l * thd * thd * s - k1 * xd - k * y[0]
    r2 = u - k_theta * thd
    dy[0] = xd
    dy[1] = (J * r1 - a12 * r2) / det
    dy[2] = thd
    dy[3] = (a11 * r2 - a12 * r1) / det


# drill_dc: J_u J_l k_theta b k_m v | T_su dT_su b_u db_u | T_0 T_sl T_pl omega_sl delta_sl b_l

@njit(cache=True)
def _dc_balance(y, p, out):
    rel = y[1] - y[2]
    out[0] = p[4] * p[5] - p[2] * y[0] - p[3] * rel
    out[1] = p[2] * y[0] + p[3] * rel


@njit(cache=True)
def _dc_assemble(y, p, fr, dy):
    rel = y[1] - y[2]
    dy[0] = rel
    dy[1] = (p[4] * p[5] - p[2] * y[0] - p[3] * rel - fr[0]) / p[0]
    dy[2] = (p[2] * y[0] + p[3] * rel - fr[1]) / p[1]
    dy[3] = y[1]


# drill_induction: J_u J_l k_theta b a c omega_field nBS | T_0 T_sl T_pl omega_sl delta_sl b_l

@njit(cache=True)
def _ind_assemble(y, p, fr, dy):
    g = p[7]
    s1 = math.sin(y[0])
    s2 = math.sin(y[0] + TWO_PI_3)
    s3 = math.sin(y[0] + 2.0 * TWO_PI_3)
    torsion = p[2] * (y[0] - y[2]) + p[3] * (y[1] - y[3])
    motor = g * (y[4] * s1 + y[5] * s2 + y[6] * s3)
    dy[0] = y[1]
    dy[1] = (motor - torsion) / p[0]
    dy[2] = y[3]
    dy[3] = (torsion - fr[0]) / p[1]
    dy[4] = -p[5] * y[4] - g * y[1] * s1
    dy[5] = -p[5] * y[5] - g * y[1] * s2
    dy[6] = -p[5] * y[6] - g * y[1] * s3


# oscillator: omega0^2 damping forcing mu   (x'' = -w0^2 x - c x' + F - friction)

@njit(cache=True)
def balance(mid, y, p, out):
    if mid == DRILL_DC:
        _dc_balance(y, p, out)
    elif mid == DRILL_INDUCTION:
        out[0] = p[2] * (y[0] - y[2]) + p[3] * (y[1] - y[3])
    elif mid == OSCILLATOR:
        out[0] = -p[0] * y[0] - p[1] * y[1] + p[2]


@njit(cache=True)
def slip(mid, j, omega, s, p):
    if mid == DRILL_DC:
        if j == 0:
            return upper_slip_torque(omega, s, p[6], p[7], p[8], p[9])
        return lower_slip_torque(omega, s, p[10], p[11], p[12], p[13], p[14], p[15])
    if mid == DRILL_INDUCTION:
        return lower_slip_torque(omega + p[6], s, p[8], p[9], p[10], p[11], p[12], p[13])
    if mid == OSCILLATOR:
        return s * p[3]
    return 0.0


@njit(cache=True)
def assemble(mid, y, p, fr, dy):
    if mid == TORA:
        _tora_assemble(y, p, dy)
    elif mid == DRILL_DC:
        _dc_assemble(y, p, fr, dy)
    elif mid == DRILL_INDUCTION:
        _ind_assemble(y, p, fr, dy)
    else:
        dy[0] = y[1]
        dy[1] = -p[0] * y[0] - p[1] * y[1] + p[2] - fr[0]
