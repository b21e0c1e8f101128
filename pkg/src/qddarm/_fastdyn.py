"""Scalar rigid-body kernels for the 7-joint serial chain.

numpy's per-call overhead dominates at 3-vector size, so the per-substep
hot path (recursive Newton-Euler, composite-rigid-body mass matrix,
potential energy) runs on unrolled tuple arithmetic. Results are identical
to the reference formulation in arm.py's tests.
"""

from __future__ import annotations

from math import cos, sin


def compile_chain(chain) -> tuple:
    """Freeze chain data into plain tuples for the scalar kernels."""
    axes = tuple(tuple(float(x) for x in a) for a in chain.joint_axes)
    offs = tuple(tuple(float(x) for x in o) for o in chain.joint_offsets)
    tool = tuple(float(x) for x in chain.tool_offset)
    masses = tuple(float(m) for m in chain.link_masses)
    coms = tuple(tuple(float(x) for x in c) for c in chain.link_coms)
    inertias = tuple(
        tuple(tuple(float(x) for x in row) for row in I) for I in chain.link_inertias
    )
    gravity = tuple(float(x) for x in chain.gravity)
    return axes, offs, tool, masses, coms, inertias, gravity, float(chain.payload)


def _rot(axis, angle):
    x, y, z = axis
    c, s = cos(angle), sin(angle)
    C = 1.0 - c
    return (
        (c + x * x * C, x * y * C - z * s, x * z * C + y * s),
        (y * x * C + z * s, c + y * y * C, y * z * C - x * s),
        (z * x * C - y * s, z * y * C + x * s, c + z * z * C),
    )


def _mv(M, v):
    a, b, c = M
    return (
        a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
        b[0] * v[0] + b[1] * v[1] + b[2] * v[2],
        c[0] * v[0] + c[1] * v[1] + c[2] * v[2],
    )


def _mm(A, B):
    return tuple(
        tuple(A[i][0] * B[0][j] + A[i][1] * B[1][j] + A[i][2] * B[2][j] for j in range(3))
        for i in range(3)
    )


def _rot_inertia(R, I):
    """R I R^T for symmetric I."""
    RI = _mm(R, I)
    return tuple(
        tuple(RI[i][0] * R[j][0] + RI[i][1] * R[j][1] + RI[i][2] * R[j][2] for j in range(3))
        for i in range(3)
    )


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def frames(cdata, q):
    """World rotations, joint origins, world axes, world COMs, tool point."""
    axes, offs, tool, masses, coms, _, _, _ = cdata
    R_prev = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    p_prev = (0.0, 0.0, 0.0)
    R = []
    p = []
    z = []
    c = []
    for i in range(7):
        pi = _add(p_prev, _mv(R_prev, offs[i]))
        zi = _mv(R_prev, axes[i])
        Ri = _mm(R_prev, _rot(axes[i], q[i]))
        R.append(Ri)
        p.append(pi)
        z.append(zi)
        c.append(_add(pi, _mv(Ri, coms[i])))
        R_prev, p_prev = Ri, pi
    tool_p = _add(p_prev, _mv(R_prev, tool))
    return R, p, z, c, tool_p


def rnea(cdata, q, qd, qdd, gravity=None):
    """Joint torques for the motion (q, qd, qdd); world-frame recursion."""
    axes, offs, tool, masses, coms, inertias, g_default, payload = cdata
    g = g_default if gravity is None else gravity
    R, p, z, c, tool_p = frames(cdata, q)

    w = []
    wd = []
    ac = []
    w_prev = (0.0, 0.0, 0.0)
    wd_prev = (0.0, 0.0, 0.0)
    a_prev = (-g[0], -g[1], -g[2])
    p_prev = (0.0, 0.0, 0.0)
    for i in range(7):
        d = _sub(p[i], p_prev)
        a_joint = _add(a_prev, _add(_cross(wd_prev, d), _cross(w_prev, _cross(w_prev, d))))
        zi = z[i]
        w_i = _add(w_prev, _scale(zi, qd[i]))
        wd_i = _add(wd_prev, _add(_scale(zi, qdd[i]), _scale(_cross(w_prev, zi), qd[i])))
        c_rel = _sub(c[i], p[i])
        a_ci = _add(a_joint, _add(_cross(wd_i, c_rel), _cross(w_i, _cross(w_i, c_rel))))
        w.append(w_i)
        wd.append(wd_i)
        ac.append(a_ci)
        w_prev, wd_prev, a_prev, p_prev = w_i, wd_i, a_joint, p[i]

    if payload > 0.0:
        d = _sub(tool_p, p[6])
        a_tool = _add(a_prev, _add(_cross(wd_prev, d), _cross(w_prev, _cross(w_prev, d))))
        f_child = _scale(a_tool, payload)
        child_point = tool_p
    else:
        f_child = (0.0, 0.0, 0.0)
        child_point = tool_p
    n_child = (0.0, 0.0, 0.0)

    tau = [0.0] * 7
    for i in range(6, -1, -1):
        Iw = _rot_inertia(R[i], inertias[i])
        F = _scale(ac[i], masses[i])
        N = _add(_mv(Iw, wd[i]), _cross(w[i], _mv(Iw, w[i])))
        c_rel = _sub(c[i], p[i])
        n = _add(_add(N, _cross(c_rel, F)), _add(n_child, _cross(_sub(child_point, p[i]), f_child)))
        f = _add(F, f_child)
        tau[i] = _dot(n, z[i])
        f_child, n_child, child_point = f, n, p[i]
    return tau


def crba(cdata, q):
    """Mass matrix via the composite-rigid-body algorithm (world frame)."""
    axes, offs, tool, masses, coms, inertias, _, payload = cdata
    R, p, z, c, tool_p = frames(cdata, q)

    # composite of link 7 (index 6) plus optional payload point mass
    Iw = _rot_inertia(R[6], inertias[6])
    m_c = masses[6]
    c_c = c[6]
    I_c = Iw
    if payload > 0.0:
        m_new = m_c + payload
        c_new = _scale(_add(_scale(c_c, m_c), _scale(tool_p, payload)), 1.0 / m_new)
        I_c = _translate_inertia(I_c, m_c, _sub(c_c, c_new))
        I_c = _add_mat(I_c, _point_inertia(payload, _sub(tool_p, c_new)))
        m_c, c_c = m_new, c_new

    M = [[0.0] * 7 for _ in range(7)]
    for i in range(6, -1, -1):
        zi = z[i]
        r = _sub(c_c, p[i])
        F = _scale(_cross(zi, r), m_c)
        N = _mv(I_c, zi)
        for j in range(i, -1, -1):
            nj = _add(N, _cross(_sub(c_c, p[j]), F))
            val = _dot(nj, z[j])
            M[i][j] = val
            M[j][i] = val
        if i > 0:
            # merge link i-1 into the composite
            mi = masses[i - 1]
            ci = c[i - 1]
            Ii = _rot_inertia(R[i - 1], inertias[i - 1])
            m_new = m_c + mi
            c_new = _scale(_add(_scale(c_c, m_c), _scale(ci, mi)), 1.0 / m_new)
            I_c = _add_mat(
                _translate_inertia(I_c, m_c, _sub(c_c, c_new)),
                _translate_inertia(Ii, mi, _sub(ci, c_new)),
            )
            m_c, c_c = m_new, c_new
    return M


def _point_inertia(m, d):
    dx, dy, dz = d
    d2 = dx * dx + dy * dy + dz * dz
    return (
        (m * (d2 - dx * dx), -m * dx * dy, -m * dx * dz),
        (-m * dy * dx, m * (d2 - dy * dy), -m * dy * dz),
        (-m * dz * dx, -m * dz * dy, m * (d2 - dz * dz)),
    )


def _translate_inertia(I, m, d):
    return _add_mat(I, _point_inertia(m, d))


def _add_mat(A, B):
    return tuple(tuple(A[i][j] + B[i][j] for j in range(3)) for i in range(3))


def potential_energy(cdata, q):
    axes, offs, tool, masses, coms, inertias, g, payload = cdata
    _, p, _, c, tool_p = frames(cdata, q)
    e = 0.0
    for i in range(7):
        e -= masses[i] * _dot(g, c[i])
    if payload > 0.0:
        e -= payload * _dot(g, tool_p)
    return e
