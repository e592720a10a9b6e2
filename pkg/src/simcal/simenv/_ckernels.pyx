# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel. Same semantics as ``_kernels_py``."""

import numpy as np

from libc.math cimport sin, tanh, fabs
from libc.stdlib cimport malloc, free

cdef enum:
    PENDULUM = 0
    SPRING = 1
    BALL = 2
    BALL_SURJ = 3
    CHAIN_LINKS = 4
    CHAIN_JOINTS = 5

cdef double GRAVITY = 9.81
cdef double PENDULUM_LENGTH = 1.0
cdef double SURJ_RESTITUTION = 0.8
cdef double CHAIN_STIFFNESS = 5.0
cdef double CHAIN_DAMPING = 0.2
cdef double CHAIN_FRICTION = 0.1
cdef double FRICTION_VSCALE = 0.05


cdef inline void chain_accel(int n, const double* q, const double* v, const double* u,
                             const double* p, int joints, double* out) noexcept nogil:
    cdef int j, nxt
    cdef double f, k, d, m
    for j in range(n):
        out[j] = u[j]
    for j in range(n):
        nxt = (j + 1) % n
        if joints:
            d = p[3 * j]
            k = p[3 * j + 1]
        else:
            d = CHAIN_DAMPING
            k = CHAIN_STIFFNESS
        f = k * (q[nxt] - q[j]) + d * (v[nxt] - v[j])
        out[j] += f
        out[nxt] -= f
    for j in range(n):
        if joints:
            out[j] -= p[3 * j + 2] * tanh(v[j] / FRICTION_VSCALE)
            m = 1.0
        else:
            out[j] -= CHAIN_FRICTION * tanh(v[j] / FRICTION_VSCALE)
            m = p[j]
        out[j] = out[j] / m


cdef inline void deriv(int code, const double* p, int sdim, const double* s,
                       const double* a, double* out) noexcept nogil:
    cdef double inertia, v, drag
    cdef int n, i
    if code == PENDULUM:
        inertia = p[0] * PENDULUM_LENGTH * PENDULUM_LENGTH
        out[0] = s[1]
        out[1] = (GRAVITY / PENDULUM_LENGTH) * sin(s[0]) - (p[1] / inertia) * s[1] + a[0] / inertia
    elif code == SPRING:
        out[0] = s[1]
        out[1] = (-p[1] * s[0] - p[2] * s[1] + a[0]) / p[0]
    elif code == BALL:
        v = s[1]
        out[0] = v
        out[1] = -GRAVITY - (p[2] / p[1]) * v * fabs(v) + a[0] / p[1]
    elif code == BALL_SURJ:
        drag = p[0] * p[1]
        v = s[1]
        out[0] = v
        out[1] = -GRAVITY - drag * v * fabs(v) + a[0]
    else:
        n = sdim // 2
        for i in range(n):
            out[i] = s[n + i]
        chain_accel(n, s, s + n, a, p, code == CHAIN_JOINTS, out + n)


cdef inline void contact(int code, const double* p, double* s) noexcept nogil:
    cdef double e
    if code == BALL:
        e = p[0]
    elif code == BALL_SURJ:
        e = SURJ_RESTITUTION
    else:
        return
    if s[0] < 0.0:
        s[0] = -e * s[0]
        if s[1] < 0.0:
            s[1] = -e * s[1]


def rollout(int code, double[:, ::1] params, double[:, ::1] starts, double[:, :, ::1] feedforward,
            gains, double[::1] lo, double[::1] hi, double dt):
    cdef Py_ssize_t batch = feedforward.shape[0]
    cdef Py_ssize_t horizon = feedforward.shape[1]
    cdef Py_ssize_t adim = feedforward.shape[2]
    cdef Py_ssize_t sdim = starts.shape[1]
    states_arr = np.empty((batch, horizon + 1, sdim))
    actions_arr = np.empty((batch, horizon, adim))
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, :, ::1] actions = actions_arr
    cdef double[:, :, ::1] K
    cdef bint has_gain = gains is not None
    if has_gain:
        K = np.ascontiguousarray(gains, dtype=float)
    cdef double* work = <double*> malloc(6 * sdim * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double* s = work
    cdef double* k1 = work + sdim
    cdef double* k2 = work + 2 * sdim
    cdef double* k3 = work + 3 * sdim
    cdef double* k4 = work + 4 * sdim
    cdef double* tmp = work + 5 * sdim
    cdef double* a
    cdef double* pp
    cdef Py_ssize_t b, t, i, j
    cdef double acc, half = 0.5 * dt, sixth = dt / 6.0
    try:
        with nogil:
            for b in range(batch):
                pp = &params[b, 0]
                for i in range(sdim):
                    s[i] = starts[b, i]
                    states[b, 0, i] = s[i]
                for t in range(horizon):
                    a = &actions[b, t, 0]
                    for j in range(adim):
                        acc = feedforward[b, t, j]
                        if has_gain:
                            for i in range(sdim):
                                acc = acc + K[b, j, i] * s[i]
                        if acc < lo[j]:
                            acc = lo[j]
                        if acc > hi[j]:
                            acc = hi[j]
                        a[j] = acc
                    deriv(code, pp, sdim, s, a, k1)
                    for i in range(sdim):
                        tmp[i] = s[i] + half * k1[i]
                    deriv(code, pp, sdim, tmp, a, k2)
                    for i in range(sdim):
                        tmp[i] = s[i] + half * k2[i]
                    deriv(code, pp, sdim, tmp, a, k3)
                    for i in range(sdim):
                        tmp[i] = s[i] + dt * k3[i]
                    deriv(code, pp, sdim, tmp, a, k4)
                    for i in range(sdim):
                        s[i] = s[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    contact(code, pp, s)
                    for i in range(sdim):
                        states[b, t + 1, i] = s[i]
    finally:
        free(work)
    return states_arr, actions_arr
