# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-tick kernels: chain kinematics and dynamics integration.

Mirrors _pure.py operation for operation; keep both in sync.
"""

from libc.math cimport cos, sin, sqrt

import numpy as np

IMPL = "cython"


cdef void _rotation(const double[:] axis, double angle, double r[3][3]) noexcept nogil:
    cdef double x = axis[0], y = axis[1], z = axis[2]
    cdef double c = cos(angle), s = sin(angle), t = 1.0 - c
    r[0][0] = c + x * x * t
    r[0][1] = x * y * t - z * s
    r[0][2] = x * z * t + y * s
    r[1][0] = y * x * t + z * s
    r[1][1] = c + y * y * t
    r[1][2] = y * z * t - x * s
    r[2][0] = z * x * t - y * s
    r[2][1] = z * y * t + x * s
    r[2][2] = c + z * z * t


cdef void _matmul3(const double a[3][3], const double b[3][3], double out[3][3]) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j]


cdef void _chain(const double[:, ::1] axes, const double[:, ::1] offsets, const double[:] q,
                 int n, double rot[3][3], double pos[3],
                 double[:, ::1] origins, double[:, ::1] z_axes) noexcept nogil:
    # Walks the chain; when origins/z_axes views are non-empty they receive the
    # per-joint frame data needed by the Jacobian.
    cdef double step[3][3]
    cdef double tmp[3][3]
    cdef double v[3]
    cdef int i, j, k
    rot[0][0] = 1.0; rot[0][1] = 0.0; rot[0][2] = 0.0
    rot[1][0] = 0.0; rot[1][1] = 1.0; rot[1][2] = 0.0
    rot[2][0] = 0.0; rot[2][1] = 0.0; rot[2][2] = 1.0
    pos[0] = 0.0; pos[1] = 0.0; pos[2] = 0.0
    cdef bint record = origins.shape[0] == n
    for i in range(n):
        for j in range(3):
            v[j] = rot[j][0] * offsets[i, 0] + rot[j][1] * offsets[i, 1] + rot[j][2] * offsets[i, 2]
        for j in range(3):
            pos[j] = pos[j] + v[j]
        if record:
            for j in range(3):
                origins[i, j] = pos[j]
                z_axes[i, j] = rot[j][0] * axes[i, 0] + rot[j][1] * axes[i, 1] + rot[j][2] * axes[i, 2]
        _rotation(axes[i], q[i], step)
        _matmul3(rot, step, tmp)
        for j in range(3):
            for k in range(3):
                rot[j][k] = tmp[j][k]


def fk_pose(const double[:, ::1] axes, const double[:, ::1] offsets,
            const double[:] flange, const double[:] q):
    """Flange pose of the joint chain: (position (3,), quaternion (4,) wxyz)."""
    cdef int n = q.shape[0]
    cdef double rot[3][3]
    cdef double pos[3]
    empty = np.empty((0, 3))
    cdef double[:, ::1] no_rec = empty
    _chain(axes, offsets, q, n, rot, pos, no_rec, no_rec)
    out_pos = np.empty(3)
    cdef double[:] p = out_pos
    cdef int j
    for j in range(3):
        p[j] = pos[j] + rot[j][0] * flange[0] + rot[j][1] * flange[1] + rot[j][2] * flange[2]

    # Shepperd's method, canonical w >= 0.
    out_quat = np.empty(4)
    cdef double[:] quat = out_quat
    cdef double trace = rot[0][0] + rot[1][1] + rot[2][2]
    cdef double s
    if trace > 0.0:
        s = sqrt(trace + 1.0) * 2.0
        quat[0] = 0.25 * s
        quat[1] = (rot[2][1] - rot[1][2]) / s
        quat[2] = (rot[0][2] - rot[2][0]) / s
        quat[3] = (rot[1][0] - rot[0][1]) / s
    elif rot[0][0] > rot[1][1] and rot[0][0] > rot[2][2]:
        s = sqrt(1.0 + rot[0][0] - rot[1][1] - rot[2][2]) * 2.0
        quat[0] = (rot[2][1] - rot[1][2]) / s
        quat[1] = 0.25 * s
        quat[2] = (rot[0][1] + rot[1][0]) / s
        quat[3] = (rot[0][2] + rot[2][0]) / s
    elif rot[1][1] > rot[2][2]:
        s = sqrt(1.0 + rot[1][1] - rot[0][0] - rot[2][2]) * 2.0
        quat[0] = (rot[0][2] - rot[2][0]) / s
        quat[1] = (rot[0][1] + rot[1][0]) / s
        quat[2] = 0.25 * s
        quat[3] = (rot[1][2] + rot[2][1]) / s
    else:
        s = sqrt(1.0 + rot[2][2] - rot[0][0] - rot[1][1]) * 2.0
        quat[0] = (rot[1][0] - rot[0][1]) / s
        quat[1] = (rot[0][2] + rot[2][0]) / s
        quat[2] = (rot[1][2] + rot[2][1]) / s
        quat[3] = 0.25 * s
    cdef double norm = sqrt(quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3])
    for j in range(4):
        quat[j] = quat[j] / norm
    if quat[0] < 0.0:
        for j in range(4):
            quat[j] = -quat[j]
    return out_pos, out_quat


def jacobian(const double[:, ::1] axes, const double[:, ::1] offsets,
             const double[:] flange, const double[:] q):
    """Geometric Jacobian of the flange in the base frame, (6, n)."""
    cdef int n = q.shape[0]
    origins_arr = np.empty((n, 3))
    z_arr = np.empty((n, 3))
    cdef double[:, ::1] origins = origins_arr
    cdef double[:, ::1] z_axes = z_arr
    cdef double rot[3][3]
    cdef double pos[3]
    _chain(axes, offsets, q, n, rot, pos, origins, z_axes)
    cdef double fx = pos[0] + rot[0][0] * flange[0] + rot[0][1] * flange[1] + rot[0][2] * flange[2]
    cdef double fy = pos[1] + rot[1][0] * flange[0] + rot[1][1] * flange[1] + rot[1][2] * flange[2]
    cdef double fz = pos[2] + rot[2][0] * flange[0] + rot[2][1] * flange[1] + rot[2][2] * flange[2]
    out = np.empty((6, n))
    cdef double[:, ::1] jac = out
    cdef double rx, ry, rz
    cdef int i
    for i in range(n):
        rx = fx - origins[i, 0]
        ry = fy - origins[i, 1]
        rz = fz - origins[i, 2]
        jac[0, i] = z_axes[i, 1] * rz - z_axes[i, 2] * ry
        jac[1, i] = z_axes[i, 2] * rx - z_axes[i, 0] * rz
        jac[2, i] = z_axes[i, 0] * ry - z_axes[i, 1] * rx
        jac[3, i] = z_axes[i, 0]
        jac[4, i] = z_axes[i, 1]
        jac[5, i] = z_axes[i, 2]
    return out


cdef inline void _clamp_limits(double[:] q_new, double[:] qd_new,
                               const double[:] lim_lo, const double[:] lim_hi, int n) noexcept nogil:
    cdef int j
    for j in range(n):
        if q_new[j] < lim_lo[j]:
            q_new[j] = lim_lo[j]
            qd_new[j] = 0.0
        elif q_new[j] > lim_hi[j]:
            q_new[j] = lim_hi[j]
            qd_new[j] = 0.0


def position_step(const double[:] q, const double[:] q_cmd, const double[:] vmax, double dt,
                  const double[:] lim_lo, const double[:] lim_hi):
    """Rate-limited tracking toward q_cmd: one tick, returns (q', qd')."""
    cdef int n = q.shape[0]
    q_arr = np.empty(n)
    qd_arr = np.empty(n)
    cdef double[:] q_new = q_arr
    cdef double[:] qd_new = qd_arr
    cdef double step, cap
    cdef int j
    for j in range(n):
        step = q_cmd[j] - q[j]
        cap = vmax[j] * dt
        if step > cap:
            step = cap
        elif step < -cap:
            step = -cap
        q_new[j] = q[j] + step
        qd_new[j] = step / dt
    _clamp_limits(q_new, qd_new, lim_lo, lim_hi, n)
    return q_arr, qd_arr


def torque_step(const double[:] q, const double[:] qd, const double[:] tau,
                const double[:] inertia, double dt,
                const double[:] lim_lo, const double[:] lim_hi):
    """Semi-implicit Euler step under joint torque tau, with hard joint stops."""
    cdef int n = q.shape[0]
    q_arr = np.empty(n)
    qd_arr = np.empty(n)
    cdef double[:] q_new = q_arr
    cdef double[:] qd_new = qd_arr
    cdef int j
    for j in range(n):
        qd_new[j] = qd[j] + tau[j] / inertia[j] * dt
        q_new[j] = q[j] + qd_new[j] * dt
    _clamp_limits(q_new, qd_new, lim_lo, lim_hi, n)
    return q_arr, qd_arr


def impedance_torque(const double[:] q, const double[:] qd, const double[:] q_cmd,
                     const double[:] stiffness, const double[:] damping,
                     const double[:] tau_overlay, const double[:] tau_ext):
    """Joint impedance law: K∘(q_cmd − q) − D∘qd + overlay + external."""
    cdef int n = q.shape[0]
    out = np.empty(n)
    cdef double[:] tau = out
    cdef int j
    for j in range(n):
        tau[j] = stiffness[j] * (q_cmd[j] - q[j]) - damping[j] * qd[j] + tau_overlay[j] + tau_ext[j]
    return out


def torque_rollout(const double[:] q0, const double[:] qd0, const double[:] q_cmd,
                   const double[:] stiffness, const double[:] damping, const double[:] inertia,
                   double dt, const double[:] lim_lo, const double[:] lim_hi, int n_ticks):
    """Roll the zero-overlay impedance dynamics n_ticks forward."""
    cdef int n = q0.shape[0]
    qs_arr = np.empty((n_ticks + 1, n))
    qds_arr = np.empty((n_ticks + 1, n))
    cdef double[:, ::1] qs = qs_arr
    cdef double[:, ::1] qds = qds_arr
    cdef double q[16]
    cdef double qd[16]
    cdef double tau
    cdef int j, k
    for j in range(n):
        q[j] = q0[j]
        qd[j] = qd0[j]
        qs[0, j] = q[j]
        qds[0, j] = qd[j]
    with nogil:
        for k in range(n_ticks):
            for j in range(n):
                tau = stiffness[j] * (q_cmd[j] - q[j]) - damping[j] * qd[j]
                qd[j] = qd[j] + tau / inertia[j] * dt
                q[j] = q[j] + qd[j] * dt
                if q[j] < lim_lo[j]:
                    q[j] = lim_lo[j]
                    qd[j] = 0.0
                elif q[j] > lim_hi[j]:
                    q[j] = lim_hi[j]
                    qd[j] = 0.0
                qs[k + 1, j] = q[j]
                qds[k + 1, j] = qd[j]
    return qs_arr, qds_arr
