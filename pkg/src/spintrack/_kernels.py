"""Compiled inner loops.

These kernels carry the per-sample recursions (spin simulation, filter sweep)
that dominate runtime.  They are deliberately free of Python objects: plain
float64 arrays in, plain arrays out, all randomness pre-drawn by the caller.
The module-level operations in :mod:`spintrack.simulate` and
:mod:`spintrack.filtering` define the semantics; the test suite pins the
kernels to those operations step by step.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _mat3_mul(a, b, out):
    # out = a @ b
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for l in range(3):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc


@njit(cache=True, inline="always")
def _mat3_mul_bt(a, b, out):
    # out = a @ b.T
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for l in range(3):
                acc += a[i, l] * b[j, l]
            out[i, j] = acc


@njit(cache=True)
def simulate_exact_core(omega, dt, gamma, g_d, q_x, q_z,
                        init_draws, spin_draws, meas_draws, r_sqrt,
                        jx_out, y_out):
    """Exact rotation-decay recursion for the transverse spin, plus readout.

    omega      : (n,) true angular frequency at each sample
    init_draws : (2,) standard normals for the stationary initial spin
    spin_draws : (n-1, 2) standard normals for the per-step process noise
    meas_draws : (n,) standard normals for the photodetection noise
    r_sqrt     : (n,) per-sample measurement-noise standard deviation, V
    """
    n = omega.size
    decay = np.exp(-gamma * dt)
    qstep = -np.expm1(-2.0 * gamma * dt)
    sx = np.sqrt(qstep * q_x)
    sz = np.sqrt(qstep * q_z)
    jx = np.sqrt(q_x) * init_draws[0]
    jz = np.sqrt(q_z) * init_draws[1]
    jx_out[0] = jx
    y_out[0] = g_d * jx + r_sqrt[0] * meas_draws[0]
    for k in range(1, n):
        c = np.cos(omega[k - 1] * dt)
        s = np.sin(omega[k - 1] * dt)
        jx_new = decay * (c * jx - s * jz) + sx * spin_draws[k - 1, 0]
        jz_new = decay * (s * jx + c * jz) + sz * spin_draws[k - 1, 1]
        jx = jx_new
        jz = jz_new
        jx_out[k] = jx
        y_out[k] = g_d * jx + r_sqrt[k] * meas_draws[k]


@njit(cache=True)
def simulate_euler_core(omega, dt, substeps, gamma, g_d, q_x, q_z,
                        init_draws, sub_draws, meas_draws, r_sqrt,
                        jx_out, y_out):
    """Euler-Maruyama integration with ``substeps`` micro-steps per sample.

    sub_draws : (n-1, substeps, 2) standard normals.  omega is held at its
    sample-start value across the micro-steps of that interval.
    """
    n = omega.size
    h = dt / substeps
    sx = np.sqrt(2.0 * gamma * q_x * h)
    sz = np.sqrt(2.0 * gamma * q_z * h)
    jx = np.sqrt(q_x) * init_draws[0]
    jz = np.sqrt(q_z) * init_draws[1]
    jx_out[0] = jx
    y_out[0] = g_d * jx + r_sqrt[0] * meas_draws[0]
    for k in range(1, n):
        w = omega[k - 1]
        for j in range(substeps):
            dx = (-gamma * jx - w * jz) * h + sx * sub_draws[k - 1, j, 0]
            dz = (w * jx - gamma * jz) * h + sz * sub_draws[k - 1, j, 1]
            jx += dx
            jz += dz
        jx_out[k] = jx
        y_out[k] = g_d * jx + r_sqrt[k] * meas_draws[k]


@njit(cache=True)
def filter_core(y, dt, gamma, g_d, q_x, q_z, alpha,
                r_init, r_floor, win_n, adapt_on, flipped_sign,
                x0, p0,
                x_hat, p_diag, innov, r_hat, p_final):
    """Sequential predict/adapt/update loop over one trace.

    Returns -1 on success, or the sample index at which the innovation
    variance became non-positive (numerical failure).

    adapt_on     : False -> fixed r_init every step (plain tracker)
    flipped_sign : True -> use the sign-flipped window estimator
                   mean(hph) - mean(v^2) instead of the conventional
                   mean(v^2) - mean(hph)
    """
    n = y.size
    decay = np.exp(-gamma * dt)
    qstep = -np.expm1(-2.0 * gamma * dt)
    q1 = qstep * q_x
    q2 = qstep * q_z

    jx = x0[0]
    jz = x0[1]
    w = x0[2]
    P = p0.copy()
    F = np.zeros((3, 3))
    A = np.zeros((3, 3))
    T = np.empty((3, 3))
    Pn = np.empty((3, 3))
    F[2, 2] = 1.0
    A[1, 1] = 1.0
    A[2, 2] = 1.0

    vwin = np.zeros(win_n)
    hwin = np.zeros(win_n)
    prev_r = r_init

    for k in range(n):
        # --- predict ---------------------------------------------------
        c = np.cos(w * dt)
        s = np.sin(w * dt)
        F[0, 0] = decay * c
        F[0, 1] = -decay * s
        F[0, 2] = decay * dt * (-s * jx - c * jz)
        F[1, 0] = decay * s
        F[1, 1] = decay * c
        F[1, 2] = decay * dt * (c * jx - s * jz)

        jx_new = decay * (c * jx - s * jz)
        jz_new = decay * (s * jx + c * jz)
        jx = jx_new
        jz = jz_new

        _mat3_mul(F, P, T)
        _mat3_mul_bt(T, F, Pn)
        Pn[0, 0] += q1
        Pn[1, 1] += q2
        Pn[2, 2] += alpha
        for i in range(3):
            P[i, i] = Pn[i, i]
            for j in range(i + 1, 3):
                m = 0.5 * (Pn[i, j] + Pn[j, i])
                P[i, j] = m
                P[j, i] = m

        # --- innovation ------------------------------------------------
        v = y[k] - g_d * jx
        hph = g_d * g_d * P[0, 0]

        # --- measurement-noise selection -------------------------------
        if adapt_on:
            pos = k % win_n
            vwin[pos] = v
            hwin[pos] = hph
            count = k + 1
            if count > win_n:
                count = win_n
            if count >= 2:
                sv = 0.0
                sh = 0.0
                for i in range(count):
                    sv += vwin[i] * vwin[i]
                    sh += hwin[i]
                if flipped_sign:
                    cand = sh / count - sv / count
                else:
                    cand = sv / count - sh / count
                if cand >= r_floor:
                    r_use = cand
                else:
                    r_use = prev_r
            else:
                r_use = prev_r
            prev_r = r_use
        else:
            r_use = r_init

        # --- update (Joseph form) --------------------------------------
        S = hph + r_use
        if S <= 0.0:
            return k
        k0 = g_d * P[0, 0] / S
        k1 = g_d * P[1, 0] / S
        k2 = g_d * P[2, 0] / S
        jx = jx + k0 * v
        jz = jz + k1 * v
        w = w + k2 * v

        A[0, 0] = 1.0 - k0 * g_d
        A[1, 0] = -k1 * g_d
        A[2, 0] = -k2 * g_d
        _mat3_mul(A, P, T)
        _mat3_mul_bt(T, A, Pn)
        Pn[0, 0] += r_use * k0 * k0
        Pn[0, 1] += r_use * k0 * k1
        Pn[0, 2] += r_use * k0 * k2
        Pn[1, 0] += r_use * k1 * k0
        Pn[1, 1] += r_use * k1 * k1
        Pn[1, 2] += r_use * k1 * k2
        Pn[2, 0] += r_use * k2 * k0
        Pn[2, 1] += r_use * k2 * k1
        Pn[2, 2] += r_use * k2 * k2
        for i in range(3):
            P[i, i] = Pn[i, i]
            for j in range(i + 1, 3):
                m = 0.5 * (Pn[i, j] + Pn[j, i])
                P[i, j] = m
                P[j, i] = m

        x_hat[k, 0] = jx
        x_hat[k, 1] = jz
        x_hat[k, 2] = w
        p_diag[k, 0] = P[0, 0]
        p_diag[k, 1] = P[1, 1]
        p_diag[k, 2] = P[2, 2]
        innov[k] = v
        r_hat[k] = r_use

    for i in range(3):
        for j in range(3):
            p_final[i, j] = P[i, j]
    return -1
