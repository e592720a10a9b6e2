"""Pure numpy rollout kernel, vectorized over the batch axis.

Mirrors ``_ckernels.pyx`` operation for operation; used when the compiled
extension is unavailable or ``SIMCAL_PURE_PYTHON=1`` is set.
"""

import numpy as np

PENDULUM, SPRING, BALL, BALL_SURJ, CHAIN_LINKS, CHAIN_JOINTS = range(6)

GRAVITY = 9.81
PENDULUM_LENGTH = 1.0
SURJ_RESTITUTION = 0.8
CHAIN_STIFFNESS = 5.0
CHAIN_DAMPING = 0.2
CHAIN_FRICTION = 0.1
FRICTION_VSCALE = 0.05


def _chain_accel(q, v, u, mass, damp, stiff, fric):
    n = q.shape[1]
    force = u.copy()
    for j in range(n):
        nxt = (j + 1) % n
        f = stiff[:, j] * (q[:, nxt] - q[:, j]) + damp[:, j] * (v[:, nxt] - v[:, j])
        force[:, j] += f
        force[:, nxt] -= f
    force -= fric * np.tanh(v / FRICTION_VSCALE)
    return force / mass


def deriv(code, p, s, a):
    """Time derivative of the state for a batch ``(B, S)``."""
    out = np.empty_like(s)
    if code == PENDULUM:
        m, b = p[:, 0], p[:, 1]
        inertia = m * PENDULUM_LENGTH * PENDULUM_LENGTH
        out[:, 0] = s[:, 1]
        out[:, 1] = (GRAVITY / PENDULUM_LENGTH) * np.sin(s[:, 0]) - (b / inertia) * s[:, 1] + a[:, 0] / inertia
    elif code == SPRING:
        m, k, c = p[:, 0], p[:, 1], p[:, 2]
        out[:, 0] = s[:, 1]
        out[:, 1] = (-k * s[:, 0] - c * s[:, 1] + a[:, 0]) / m
    elif code == BALL:
        m, cd = p[:, 1], p[:, 2]
        v = s[:, 1]
        out[:, 0] = v
        out[:, 1] = -GRAVITY - (cd / m) * v * np.abs(v) + a[:, 0] / m
    elif code == BALL_SURJ:
        drag = p[:, 0] * p[:, 1]
        v = s[:, 1]
        out[:, 0] = v
        out[:, 1] = -GRAVITY - drag * v * np.abs(v) + a[:, 0]
    elif code == CHAIN_LINKS:
        n = s.shape[1] // 2
        q, v = s[:, :n], s[:, n:]
        ones = np.ones_like(q)
        out[:, :n] = v
        out[:, n:] = _chain_accel(
            q, v, a, p, CHAIN_DAMPING * ones, CHAIN_STIFFNESS * ones, CHAIN_FRICTION * ones
        )
    elif code == CHAIN_JOINTS:
        n = s.shape[1] // 2
        q, v = s[:, :n], s[:, n:]
        out[:, :n] = v
        out[:, n:] = _chain_accel(q, v, a, 1.0, p[:, 0::3], p[:, 1::3], p[:, 2::3])
    else:
        raise ValueError(f"unknown dynamics code {code}")
    return out


def _contact(code, p, s):
    if code == BALL:
        e = p[:, 0]
    elif code == BALL_SURJ:
        e = SURJ_RESTITUTION
    else:
        return s
    below = s[:, 0] < 0.0
    if np.any(below):
        e = np.broadcast_to(e, below.shape)
        s[below, 0] = -e[below] * s[below, 0]
        falling = below & (s[:, 1] < 0.0)
        s[falling, 1] = -e[falling] * s[falling, 1]
    return s


def rk4_step(code, p, s, a, dt):
    k1 = deriv(code, p, s, a)
    k2 = deriv(code, p, s + (0.5 * dt) * k1, a)
    k3 = deriv(code, p, s + (0.5 * dt) * k2, a)
    k4 = deriv(code, p, s + dt * k3, a)
    nxt = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _contact(code, p, nxt)


def rollout(code, params, starts, feedforward, gains, lo, hi, dt):
    """Integrate ``B`` episodes; actions are ``clip(ff[t] + K @ s_t, lo, hi)``."""
    batch, horizon, adim = feedforward.shape
    sdim = starts.shape[1]
    states = np.empty((batch, horizon + 1, sdim))
    actions = np.empty((batch, horizon, adim))
    s = np.array(starts, dtype=float)
    states[:, 0] = s
    for t in range(horizon):
        a = feedforward[:, t].copy()
        if gains is not None:
            a += np.einsum("bas,bs->ba", gains, s)
        a = np.minimum(np.maximum(a, lo), hi)
        actions[:, t] = a
        s = rk4_step(code, params, s, a, dt)
        states[:, t + 1] = s
    return states, actions
