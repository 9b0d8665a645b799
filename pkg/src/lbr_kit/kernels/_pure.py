"""Pure-Python/numpy implementations of the hot per-tick kernels.

Reference semantics for the compiled extension in _core.pyx; both must agree
to float precision. Offsets are accumulated joint by joint so the zero pose
is an exact running sum of the configured link offsets.
"""

from __future__ import annotations

import math

import numpy as np

IMPL = "pure"


def _rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ]
    )


def _quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with canonical w >= 0 sign."""
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    q /= math.sqrt(float(np.dot(q, q)))
    if q[0] < 0.0:
        q = -q
    return q


def fk_pose(axes, offsets, flange, q):
    """Flange pose of the joint chain: (position (3,), quaternion (4,) wxyz)."""
    rot = np.eye(3)
    pos = np.zeros(3)
    for i in range(len(q)):
        pos = pos + rot @ offsets[i]
        rot = rot @ _rotation(axes[i], q[i])
    pos = pos + rot @ flange
    return pos, _quat_from_matrix(rot)


def jacobian(axes, offsets, flange, q):
    """Geometric Jacobian of the flange in the base frame, (6, n).

    Column i is (z_i × (p_flange − p_i), z_i) with z_i the joint axis and
    p_i the joint origin, both expressed in the base frame.
    """
    n = len(q)
    rot = np.eye(3)
    pos = np.zeros(3)
    origins = np.empty((n, 3))
    z_axes = np.empty((n, 3))
    for i in range(n):
        pos = pos + rot @ offsets[i]
        origins[i] = pos
        z_axes[i] = rot @ axes[i]
        rot = rot @ _rotation(axes[i], q[i])
    flange_pos = pos + rot @ flange
    jac = np.empty((6, n))
    for i in range(n):
        jac[0:3, i] = np.cross(z_axes[i], flange_pos - origins[i])
        jac[3:6, i] = z_axes[i]
    return jac


def _clamp_limits(q_new, qd_new, lim_lo, lim_hi):
    for j in range(len(q_new)):
        if q_new[j] < lim_lo[j]:
            q_new[j] = lim_lo[j]
            qd_new[j] = 0.0
        elif q_new[j] > lim_hi[j]:
            q_new[j] = lim_hi[j]
            qd_new[j] = 0.0


def position_step(q, q_cmd, vmax, dt, lim_lo, lim_hi):
    """Rate-limited tracking toward q_cmd: one tick, returns (q', qd')."""
    n = len(q)
    q_new = np.empty(n)
    qd_new = np.empty(n)
    for j in range(n):
        step = q_cmd[j] - q[j]
        cap = vmax[j] * dt
        if step > cap:
            step = cap
        elif step < -cap:
            step = -cap
        q_new[j] = q[j] + step
        qd_new[j] = step / dt
    _clamp_limits(q_new, qd_new, lim_lo, lim_hi)
    return q_new, qd_new


def torque_step(q, qd, tau, inertia, dt, lim_lo, lim_hi):
    """Semi-implicit Euler step under joint torque tau, with hard joint stops."""
    n = len(q)
    q_new = np.empty(n)
    qd_new = np.empty(n)
    for j in range(n):
        qd_new[j] = qd[j] + tau[j] / inertia[j] * dt
        q_new[j] = q[j] + qd_new[j] * dt
    _clamp_limits(q_new, qd_new, lim_lo, lim_hi)
    return q_new, qd_new


def impedance_torque(q, qd, q_cmd, stiffness, damping, tau_overlay, tau_ext):
    """Joint impedance law: K∘(q_cmd − q) − D∘qd + overlay + external."""
    n = len(q)
    tau = np.empty(n)
    for j in range(n):
        tau[j] = (
            stiffness[j] * (q_cmd[j] - q[j]) - damping[j] * qd[j] + tau_overlay[j] + tau_ext[j]
        )
    return tau


def torque_rollout(q0, qd0, q_cmd, stiffness, damping, inertia, dt, lim_lo, lim_hi, n_ticks):
    """Roll the zero-overlay impedance dynamics n_ticks forward.

    Returns (qs, qds) of shape (n_ticks + 1, n) including the initial state.
    """
    n = len(q0)
    qs = np.empty((n_ticks + 1, n))
    qds = np.empty((n_ticks + 1, n))
    q = np.array(q0, dtype=float)
    qd = np.array(qd0, dtype=float)
    qs[0] = q
    qds[0] = qd
    zeros = np.zeros(n)
    for k in range(n_ticks):
        tau = impedance_torque(q, qd, q_cmd, stiffness, damping, zeros, zeros)
        q, qd = torque_step(q, qd, tau, inertia, dt, lim_lo, lim_hi)
        qs[k + 1] = q
        qds[k + 1] = qd
    return qs, qds
