"""Hot numeric kernels: crane kinematics, pendulum dynamics, batched rollouts.

Everything here is written as scalar loops over small float64 arrays so numba
can compile it in nopython mode.  When numba is unavailable, or when
``CRANEMPC_PURE_NUMPY=1`` is set, the identical functions run uncompiled as
plain numpy-backed Python (same results, much slower).  ``kernel-bench`` in
the CLI compares the two paths.

State layout used throughout: ``q``/``qd`` of length ``9 + 2 + 2*S`` where S
is the number of rigid payload segments (1 nominal, 2 with a secondary
payload): base pose (6), crane joints (3), then hinge pairs (cable pair
first, one pair per segment).
"""
from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("CRANEMPC_PURE_NUMPY", "").strip().lower()
PURE_NUMPY_REQUESTED = _FLAG in ("1", "true", "yes")

try:
    if PURE_NUMPY_REQUESTED:
        raise ImportError("pure-numpy path requested via CRANEMPC_PURE_NUMPY")
    from numba import njit, prange
    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False
    prange = range

    def njit(*args, **kwargs):  # noqa: D103 - no-op decorator fallback
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn
        return deco


RAD2DEG = 180.0 / math.pi
FAIL_COST = 1.0e30

# packed parameter indices (see params.pack_params)
_GRAV, _BOOM, _MOUNT, _J0, _JSTRIDE = 0, 1, 2, 3, 7


@njit(cache=True)
def _boom_tip_into(base, slew, luff, boom, mount, out):
    """World boom-tip position for a given base pose and crane joints."""
    sr = math.sin(base[3]); cr = math.cos(base[3])
    sp = math.sin(base[4]); cp = math.cos(base[4])
    sy = math.sin(base[5]); cy = math.cos(base[5])
    # R = Rz(yaw) @ Ry(pitch) @ Rx(roll)
    r00 = cy * cp; r01 = cy * sp * sr - sy * cr; r02 = cy * sp * cr + sy * sr
    r10 = sy * cp; r11 = sy * sp * sr + cy * cr; r12 = sy * sp * cr - cy * sr
    r20 = -sp;     r21 = cp * sr;                r22 = cp * cr
    ct = math.cos(slew); st = math.sin(slew)
    cl = math.cos(luff); sl = math.sin(luff)
    mx = boom * cl * ct
    my = boom * cl * st
    mz = mount + boom * sl
    out[0] = base[0] + r00 * mx + r01 * my + r02 * mz
    out[1] = base[1] + r10 * mx + r11 * my + r12 * mz
    out[2] = base[2] + r20 * mx + r21 * my + r22 * mz


@njit(cache=True)
def _boom_tip_vel_into(base, bvel, slew, luff, slewd, luffd, boom, mount, out):
    """World boom-tip velocity from base and crane joint rates."""
    sr = math.sin(base[3]); cr = math.cos(base[3])
    sp = math.sin(base[4]); cp = math.cos(base[4])
    sy = math.sin(base[5]); cy = math.cos(base[5])
    r00 = cy * cp; r01 = cy * sp * sr - sy * cr; r02 = cy * sp * cr + sy * sr
    r10 = sy * cp; r11 = sy * sp * sr + cy * cr; r12 = sy * sp * cr - cy * sr
    r20 = -sp;     r21 = cp * sr;                r22 = cp * cr
    ct = math.cos(slew); st = math.sin(slew)
    cl = math.cos(luff); sl = math.sin(luff)
    mx = boom * cl * ct
    my = boom * cl * st
    mz = mount + boom * sl
    rmx = r00 * mx + r01 * my + r02 * mz
    rmy = r10 * mx + r11 * my + r12 * mz
    rmz = r20 * mx + r21 * my + r22 * mz
    # angular velocity of the base frame from roll/pitch/yaw rates
    wx = bvel[3] * cy * cp - bvel[4] * sy
    wy = bvel[3] * sy * cp + bvel[4] * cy
    wz = bvel[5] - bvel[3] * sp
    # crane joint contribution in the base frame
    dmx = -boom * cl * st * slewd - boom * sl * ct * luffd
    dmy = boom * cl * ct * slewd - boom * sl * st * luffd
    dmz = boom * cl * luffd
    out[0] = bvel[0] + wy * rmz - wz * rmy + r00 * dmx + r01 * dmy + r02 * dmz
    out[1] = bvel[1] + wz * rmx - wx * rmz + r10 * dmx + r11 * dmy + r12 * dmz
    out[2] = bvel[2] + wx * rmy - wy * rmx + r20 * dmx + r21 * dmy + r22 * dmz


@njit(cache=True)
def _transform_point_into(base, px, py, pz, out):
    """Platform-local point to world coordinates."""
    sr = math.sin(base[3]); cr = math.cos(base[3])
    sp = math.sin(base[4]); cp = math.cos(base[4])
    sy = math.sin(base[5]); cy = math.cos(base[5])
    out[0] = base[0] + cy * cp * px + (cy * sp * sr - sy * cr) * py + (cy * sp * cr + sy * sr) * pz
    out[1] = base[1] + sy * cp * px + (sy * sp * sr + cy * cr) * py + (sy * sp * cr - cy * sr) * pz
    out[2] = base[2] - sp * px + cp * sr * py + cp * cr * pz


@njit(cache=True)
def _actuator_vel(v, u, kv, scale, armature, damping, friction, dt):
    """One explicit-Euler update of the first-order velocity actuator."""
    target = u * scale
    vn = v + dt * (kv * (target - v) - damping * v) / armature
    if friction > 0.0:
        dv = dt * friction / armature
        if vn > dv:
            vn -= dv
        elif vn < -dv:
            vn += dv
        else:
            vn = 0.0
    return vn


@njit(cache=True)
def _chol_solve(A, b, n, x):
    """Solve SPD A x = b in place (A overwritten); False on degenerate pivot."""
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s < 1.0e-14:
            return False
        A[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s2 = A[i, j]
            for k in range(j):
                s2 -= A[i, k] * A[j, k]
            A[i, j] = s2 / A[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= A[i, k] * x[k]
        x[i] = s / A[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= A[k, i] * x[k]
        x[i] = s / A[i, i]
    return True


@njit(cache=True)
def _pend_accel(qp, qpd, l, ldot, lddot, pax, pay, paz, g, cable_damping,
                seg, hook_locked, acc, dirs, dja, djb, kq, M, rhs, coef):
    """Generalized accelerations of the hanging chain below a moving pivot.

    Hinge pairs are parameterized in the world frame: direction of pair k is
    d(a,b) = (-sin b, sin a cos b, -cos a cos b) (straight down at a=b=0).
    The translating pivot enters exactly as an effective-gravity shift, so
    the bias uses (pivot_acceleration + g z) projected on the segment
    Jacobians.  Cable length may vary (ldot/lddot terms).  Small viscous
    torques at each hinge pair model bearing/air dissipation.
    """
    S = seg.shape[0]
    ndir = S + 1
    n = 2 * ndir
    for k in range(ndir):
        a = qp[2 * k]; b = qp[2 * k + 1]
        ad = qpd[2 * k]; bd = qpd[2 * k + 1]
        sa = math.sin(a); ca = math.cos(a)
        sb = math.sin(b); cb = math.cos(b)
        dirs[k, 0] = -sb; dirs[k, 1] = sa * cb; dirs[k, 2] = -ca * cb
        dja[k, 0] = 0.0;  dja[k, 1] = ca * cb;  dja[k, 2] = sa * cb
        djb[k, 0] = -cb;  djb[k, 1] = -sa * sb; djb[k, 2] = ca * sb
        sq = ad * ad + bd * bd
        kq[k, 0] = sb * bd * bd
        kq[k, 1] = -sa * cb * sq - 2.0 * ca * sb * ad * bd
        kq[k, 2] = ca * cb * sq - 2.0 * sa * sb * ad * bd
    for i in range(n):
        rhs[i] = 0.0
        for j in range(n):
            M[i, j] = 0.0
    # cable contribution common to every body, gravity folded in
    ad0 = qpd[0]; bd0 = qpd[1]
    bkx = pax + lddot * dirs[0, 0] + 2.0 * ldot * (dja[0, 0] * ad0 + djb[0, 0] * bd0) + l * kq[0, 0]
    bky = pay + lddot * dirs[0, 1] + 2.0 * ldot * (dja[0, 1] * ad0 + djb[0, 1] * bd0) + l * kq[0, 1]
    bkz = paz + lddot * dirs[0, 2] + 2.0 * ldot * (dja[0, 2] * ad0 + djb[0, 2] * bd0) + l * kq[0, 2] + g
    for i in range(S):
        m = seg[i, 0]
        for k in range(ndir):
            coef[k] = 0.0
        coef[0] = l
        for k in range(1, i + 1):
            coef[k] = seg[k - 1, 2]
        coef[i + 1] = seg[i, 1]
        agx = bkx; agy = bky; agz = bkz
        for k in range(1, i + 2):
            agx += coef[k] * kq[k, 0]
            agy += coef[k] * kq[k, 1]
            agz += coef[k] * kq[k, 2]
        for j in range(i + 2):
            cj = coef[j]
            if cj == 0.0:
                continue
            mc = m * cj
            rhs[2 * j] -= mc * (dja[j, 0] * agx + dja[j, 1] * agy + dja[j, 2] * agz)
            rhs[2 * j + 1] -= mc * (djb[j, 0] * agx + djb[j, 1] * agy + djb[j, 2] * agz)
            for k in range(i + 2):
                ck = coef[k]
                if ck == 0.0:
                    continue
                w = mc * ck
                M[2 * j, 2 * k] += w * (dja[j, 0] * dja[k, 0] + dja[j, 1] * dja[k, 1] + dja[j, 2] * dja[k, 2])
                M[2 * j, 2 * k + 1] += w * (dja[j, 0] * djb[k, 0] + dja[j, 1] * djb[k, 1] + dja[j, 2] * djb[k, 2])
                M[2 * j + 1, 2 * k] += w * (djb[j, 0] * dja[k, 0] + djb[j, 1] * dja[k, 1] + djb[j, 2] * dja[k, 2])
                M[2 * j + 1, 2 * k + 1] += w * (djb[j, 0] * djb[k, 0] + djb[j, 1] * djb[k, 1] + djb[j, 2] * djb[k, 2])
        # rigid-segment rotational terms on its own hinge pair
        Ip = seg[i, 3]; Ia = seg[i, 4]
        kk = i + 1
        b = qp[2 * kk + 1]
        sb = math.sin(b); cb = math.cos(b)
        ad = qpd[2 * kk]; bd = qpd[2 * kk + 1]
        M[2 * kk, 2 * kk] += Ip * cb * cb + Ia * sb * sb
        M[2 * kk + 1, 2 * kk + 1] += Ip
        dI = Ia - Ip
        rhs[2 * kk] -= 2.0 * dI * sb * cb * ad * bd
        rhs[2 * kk + 1] += dI * sb * cb * ad * ad
        cd = seg[i, 5]
        rhs[2 * kk] -= cd * ad
        rhs[2 * kk + 1] -= cd * bd
    rhs[0] -= cable_damping * qpd[0]
    rhs[1] -= cable_damping * qpd[1]
    nsolve = 2 if hook_locked == 1 else n
    ok = _chol_solve(M, rhs, nsolve, acc)
    for i in range(nsolve, n):
        acc[i] = 0.0
    return ok


@njit(cache=True)
def _pend_rk2(qp, qpd, l, ldot, lddot, pax, pay, paz, g, cable_damping, seg,
              hook_locked, dt, acc, dirs, dja, djb, kq, M, rhs, coef,
              qmid, vmid, acc2):
    """Midpoint (RK2) update of the pendulum block, in place.

    Plain symplectic Euler lets the fast hook mode leak energy at the
    0.1 percent level over tens of seconds; the midpoint evaluation keeps
    undamped drift below 1e-5 at dt = 1e-3.  Pivot acceleration is held
    constant across the step.
    """
    n = qp.shape[0]
    ok = _pend_accel(qp, qpd, l, ldot, lddot, pax, pay, paz, g, cable_damping,
                     seg, hook_locked, acc, dirs, dja, djb, kq, M, rhs, coef)
    if not ok:
        return False
    h = 0.5 * dt
    for i in range(n):
        qmid[i] = qp[i] + h * qpd[i]
        vmid[i] = qpd[i] + h * acc[i]
    ok = _pend_accel(qmid, vmid, l + h * ldot, ldot, lddot, pax, pay, paz, g,
                     cable_damping, seg, hook_locked, acc2,
                     dirs, dja, djb, kq, M, rhs, coef)
    if not ok:
        return False
    for i in range(n):
        qp[i] += dt * vmid[i]
        qpd[i] += dt * acc2[i]
    return True


@njit(cache=True)
def _step(q, qd, u0, u1, u2, bnext, dt, par, seg, hook_locked,
          dirs, dja, djb, kq, M, rhs, coef, acc, t_prev, t_now, t_next, b_prev,
          qmid, vmid, acc2):
    """One fixed step, in place.  Returns False on degeneracy.

    Actuated velocities update first-order, the pendulum block advances by a
    midpoint rule (pivot acceleration = central difference of boom-tip
    positions at t-dt / t / t+dt), actuated positions integrate the new
    velocities with hard range clamping, and base coordinates are
    overwritten by the prescribed next pose.
    """
    g = par[_GRAV]; boom = par[_BOOM]; mount = par[_MOUNT]
    j0 = _J0
    v0 = _actuator_vel(qd[6], u0, par[j0], par[j0 + 1], par[j0 + 2], par[j0 + 3], par[j0 + 4], dt)
    j1 = _J0 + _JSTRIDE
    v1 = _actuator_vel(qd[7], u1, par[j1], par[j1 + 1], par[j1 + 2], par[j1 + 3], par[j1 + 4], dt)
    j2 = _J0 + 2 * _JSTRIDE
    v2 = _actuator_vel(qd[8], u2, par[j2], par[j2 + 1], par[j2 + 2], par[j2 + 3], par[j2 + 4], dt)
    ln = q[8]
    lddot = (v2 - qd[8]) / dt
    # boom-tip positions one step back (reconstructed), now, and one ahead
    for i in range(6):
        b_prev[i] = q[i] - dt * qd[i]
    _boom_tip_into(b_prev, q[6] - dt * qd[6], q[7] - dt * qd[7], boom, mount, t_prev)
    _boom_tip_into(q[:6], q[6], q[7], boom, mount, t_now)
    _boom_tip_into(bnext, q[6] + dt * v0, q[7] + dt * v1, boom, mount, t_next)
    inv_dt2 = 1.0 / (dt * dt)
    pax = (t_prev[0] - 2.0 * t_now[0] + t_next[0]) * inv_dt2
    pay = (t_prev[1] - 2.0 * t_now[1] + t_next[1]) * inv_dt2
    paz = (t_prev[2] - 2.0 * t_now[2] + t_next[2]) * inv_dt2
    ok = _pend_rk2(q[9:], qd[9:], ln, v2, lddot, pax, pay, paz, g, par[24],
                   seg, hook_locked, dt, acc, dirs, dja, djb, kq, M, rhs, coef,
                   qmid, vmid, acc2)
    qd[6] = v0; qd[7] = v1; qd[8] = v2
    for j in range(3):
        jj = 6 + j
        base = _J0 + j * _JSTRIDE
        qn = q[jj] + dt * qd[jj]
        lo = par[base + 5]; hi = par[base + 6]
        if qn < lo:
            qn = lo
            qd[jj] = 0.0
        elif qn > hi:
            qn = hi
            qd[jj] = 0.0
        q[jj] = qn
    for i in range(6):
        qd[i] = (bnext[i] - q[i]) / dt
        q[i] = bnext[i]
    return ok


@njit(cache=True)
def _payload_state(q, qd, par, seg, tip, vtip, com, vcom):
    """Boom tip and primary-payload CoM position/velocity at the given state."""
    boom = par[_BOOM]; mount = par[_MOUNT]
    _boom_tip_into(q[:6], q[6], q[7], boom, mount, tip)
    _boom_tip_vel_into(q[:6], qd[:6], q[6], q[7], qd[6], qd[7], boom, mount, vtip)
    l = q[8]; ldot = qd[8]
    r0 = seg[0, 1]
    a0 = q[9]; b0 = q[10]; ad0 = qd[9]; bd0 = qd[10]
    a1 = q[11]; b1 = q[12]; ad1 = qd[11]; bd1 = qd[12]
    sa0 = math.sin(a0); ca0 = math.cos(a0)
    sb0 = math.sin(b0); cb0 = math.cos(b0)
    sa1 = math.sin(a1); ca1 = math.cos(a1)
    sb1 = math.sin(b1); cb1 = math.cos(b1)
    d0x = -sb0; d0y = sa0 * cb0; d0z = -ca0 * cb0
    d1x = -sb1; d1y = sa1 * cb1; d1z = -ca1 * cb1
    dd0x = -cb0 * bd0
    dd0y = ca0 * cb0 * ad0 - sa0 * sb0 * bd0
    dd0z = sa0 * cb0 * ad0 + ca0 * sb0 * bd0
    dd1x = -cb1 * bd1
    dd1y = ca1 * cb1 * ad1 - sa1 * sb1 * bd1
    dd1z = sa1 * cb1 * ad1 + ca1 * sb1 * bd1
    com[0] = tip[0] + l * d0x + r0 * d1x
    com[1] = tip[1] + l * d0y + r0 * d1y
    com[2] = tip[2] + l * d0z + r0 * d1z
    vcom[0] = vtip[0] + ldot * d0x + l * dd0x + r0 * dd1x
    vcom[1] = vtip[1] + ldot * d0y + l * dd0y + r0 * dd1y
    vcom[2] = vtip[2] + ldot * d0z + l * dd0z + r0 * dd1z


@njit(cache=True)
def _sway_tilt(tip, com, a1, b1):
    """Cable sway angle and payload geodesic tilt, both in radians."""
    bx = com[0] - tip[0]; by = com[1] - tip[1]; bz = com[2] - tip[2]
    bn = math.sqrt(bx * bx + by * by + bz * bz)
    h = math.sqrt(bx * bx + by * by)
    arg = h / bn if bn > 0.0 else 0.0
    if arg > 1.0:
        arg = 1.0
    sway = math.asin(arg)
    w = abs(math.cos(0.5 * a1) * math.cos(0.5 * b1))
    if w > 1.0:
        w = 1.0
    tilt = 2.0 * math.acos(w)
    return sway, tilt


# cost parameter layout
# [A, B, d_th, k_d, k_e, eps, delta_sway, delta_tilt, w_ctrl, w_tilt]
@njit(cache=True)
def _cost_terms(dist, sway, tilt, relvel_sq, u_slew, u_luff, cp):
    """Running-cost residuals, blend weights and weighted total.

    Angle residuals are in radians; the 2.0 / 3.0 smoothing offsets keep the
    sway and tilt terms flat near vertical so they act as soft regularizers.
    """
    alpha = 0.5 * (math.tanh(cp[3] * (dist - cp[2])) + 1.0)
    beta = 0.5 * (math.tanh(-cp[4] * (dist - cp[2])) + 1.0) + 1.0
    rt = math.sqrt(dist * dist + cp[5] * cp[5]) - cp[5]
    rs = math.sqrt(sway * sway + cp[6] * cp[6])
    rv = relvel_sq
    rc = u_slew * u_slew + u_luff * u_luff
    rtl = math.sqrt(tilt * tilt + cp[7] * cp[7])
    total = (cp[0] * alpha * rt + 0.5 * cp[0] * alpha * rs
             + cp[1] * beta * rv + cp[8] * rc + cp[9] * rtl)
    return rt, rs, rv, rc, rtl, alpha, beta, total


@njit(cache=True)
def _state_cost(q, qd, par, seg, cp, tgt, vplat_x, vplat_y, vplat_z,
                u_slew, u_luff, tip, vtip, com, vcom):
    _payload_state(q, qd, par, seg, tip, vtip, com, vcom)
    dx = com[0] - tgt[0]; dy = com[1] - tgt[1]; dz = com[2] - tgt[2]
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    rvx = vcom[0] - vplat_x; rvy = vcom[1] - vplat_y; rvz = vcom[2] - vplat_z
    relv2 = rvx * rvx + rvy * rvy + rvz * rvz
    sway, tilt = _sway_tilt(tip, com, q[11], q[12])
    return _cost_terms(dist, sway, tilt, relv2, u_slew, u_luff, cp)


@njit(cache=True)
def _rollout_one(q, qd, knots_i, base_fc, targets_w, steps, dt, par, seg,
                 hook_locked, cp, dirs, dja, djb, kq, M, rhs, coef, acc,
                 t_prev, t_now, t_next, b_prev, qmid, vmid, acc2,
                 tip, vtip, com, vcom):
    """Accumulated cost of one candidate over the horizon plus terminal."""
    K = knots_i.shape[0]
    total = 0.0
    inv_dt = 1.0 / dt
    for s in range(steps):
        kidx = (s * K) // steps
        if kidx > K - 1:
            kidx = K - 1
        us = min(1.0, max(-1.0, knots_i[kidx, 0]))
        ul = min(1.0, max(-1.0, knots_i[kidx, 1]))
        uh = min(1.0, max(-1.0, knots_i[kidx, 2]))
        vpx = (targets_w[s + 1, 0] - targets_w[s, 0]) * inv_dt
        vpy = (targets_w[s + 1, 1] - targets_w[s, 1]) * inv_dt
        vpz = (targets_w[s + 1, 2] - targets_w[s, 2]) * inv_dt
        terms = _state_cost(q, qd, par, seg, cp, targets_w[s], vpx, vpy, vpz,
                            us, ul, tip, vtip, com, vcom)
        total += terms[7]
        ok = _step(q, qd, us, ul, uh, base_fc[s + 1], dt, par, seg, hook_locked,
                   dirs, dja, djb, kq, M, rhs, coef, acc,
                   t_prev, t_now, t_next, b_prev, qmid, vmid, acc2)
        if not ok or not (total <= 1.0e290):
            return FAIL_COST
    if steps >= 1:
        vpx = (targets_w[steps, 0] - targets_w[steps - 1, 0]) * inv_dt
        vpy = (targets_w[steps, 1] - targets_w[steps - 1, 1]) * inv_dt
        vpz = (targets_w[steps, 2] - targets_w[steps - 1, 2]) * inv_dt
    else:
        vpx = 0.0; vpy = 0.0; vpz = 0.0
    terms = _state_cost(q, qd, par, seg, cp, targets_w[steps], vpx, vpy, vpz,
                        0.0, 0.0, tip, vtip, com, vcom)
    total += terms[7]
    if not (total <= 1.0e290):
        return FAIL_COST
    return total


def _rollout_batch_impl(q0, qd0, knots, base_fc, targets_w, steps, dt, par,
                        seg, hook_locked, cp, costs):
    N = knots.shape[0]
    n = q0.shape[0]
    ndir = seg.shape[0] + 1
    np_ = 2 * ndir
    for i in prange(N):
        q = q0.copy()
        qd = qd0.copy()
        dirs = np.empty((ndir, 3))
        dja = np.empty((ndir, 3))
        djb = np.empty((ndir, 3))
        kq = np.empty((ndir, 3))
        M = np.empty((np_, np_))
        rhs = np.empty(np_)
        coef = np.empty(ndir)
        acc = np.empty(np_)
        t_prev = np.empty(3); t_now = np.empty(3); t_next = np.empty(3)
        b_prev = np.empty(6)
        qmid = np.empty(np_); vmid = np.empty(np_); acc2 = np.empty(np_)
        tip = np.empty(3); vtip = np.empty(3)
        com = np.empty(3); vcom = np.empty(3)
        costs[i] = _rollout_one(q, qd, knots[i], base_fc, targets_w, steps, dt,
                                par, seg, hook_locked, cp, dirs, dja, djb, kq,
                                M, rhs, coef, acc, t_prev, t_now, t_next,
                                b_prev, qmid, vmid, acc2, tip, vtip, com, vcom)
    return n  # keep signature non-void for the fallback path


rollout_batch_serial = njit(cache=True)(_rollout_batch_impl)
rollout_batch_parallel = njit(cache=True, parallel=True)(_rollout_batch_impl)


@njit(cache=True)
def _total_energy(qp, qpd, l, ldot, vtx, vty, vtz, g, seg):
    """Kinetic + potential energy of the chain, potential zero at the pivot."""
    S = seg.shape[0]
    a = qp[0]; b = qp[1]; ad = qpd[0]; bd = qpd[1]
    sa = math.sin(a); ca = math.cos(a)
    sb = math.sin(b); cb = math.cos(b)
    dx = -sb; dy = sa * cb; dz = -ca * cb
    ddx = -cb * bd
    ddy = ca * cb * ad - sa * sb * bd
    ddz = sa * cb * ad + ca * sb * bd
    px = l * dx; py = l * dy; pz = l * dz
    vx = vtx + ldot * dx + l * ddx
    vy = vty + ldot * dy + l * ddy
    vz = vtz + ldot * dz + l * ddz
    energy = 0.0
    for i in range(S):
        m = seg[i, 0]; r = seg[i, 1]; link = seg[i, 2]
        Ip = seg[i, 3]; Ia = seg[i, 4]
        a = qp[2 * (i + 1)]; b = qp[2 * (i + 1) + 1]
        ad = qpd[2 * (i + 1)]; bd = qpd[2 * (i + 1) + 1]
        sa = math.sin(a); ca = math.cos(a)
        sb = math.sin(b); cb = math.cos(b)
        dx = -sb; dy = sa * cb; dz = -ca * cb
        ddx = -cb * bd
        ddy = ca * cb * ad - sa * sb * bd
        ddz = sa * cb * ad + ca * sb * bd
        cx = px + r * dx; cy = py + r * dy; cz = pz + r * dz
        cvx = vx + r * ddx; cvy = vy + r * ddy; cvz = vz + r * ddz
        energy += 0.5 * m * (cvx * cvx + cvy * cvy + cvz * cvz) + m * g * cz
        energy += 0.5 * ((Ip * cb * cb + Ia * sb * sb) * ad * ad + Ip * bd * bd)
        px += link * dx; py += link * dy; pz += link * dz
        vx += link * ddx; vy += link * ddy; vz += link * ddz
    return energy


@njit(cache=True)
def _integrate_pendulum(qp, qpd, l, g, seg, hook_locked, dt, steps,
                        cable_damping=0.0):
    """Fixed-pivot integration of the chain alone, in place.  Oracle helper."""
    ndir = seg.shape[0] + 1
    n = 2 * ndir
    dirs = np.empty((ndir, 3)); dja = np.empty((ndir, 3))
    djb = np.empty((ndir, 3)); kq = np.empty((ndir, 3))
    M = np.empty((n, n)); rhs = np.empty(n)
    coef = np.empty(ndir); acc = np.empty(n)
    qmid = np.empty(n); vmid = np.empty(n); acc2 = np.empty(n)
    for _ in range(steps):
        ok = _pend_rk2(qp, qpd, l, 0.0, 0.0, 0.0, 0.0, 0.0, g, cable_damping,
                       seg, hook_locked, dt, acc, dirs, dja, djb, kq, M, rhs,
                       coef, qmid, vmid, acc2)
        if not ok:
            return False
    return True


def make_step_workspace(n_segments: int):
    """Preallocated scratch arrays for :func:`step_arrays`."""
    ndir = n_segments + 1
    n = 2 * ndir
    return (np.empty((ndir, 3)), np.empty((ndir, 3)), np.empty((ndir, 3)),
            np.empty((ndir, 3)), np.empty((n, n)), np.empty(n),
            np.empty(ndir), np.empty(n), np.empty(3), np.empty(3),
            np.empty(3), np.empty(6), np.empty(n), np.empty(n), np.empty(n))


def step_arrays(q, qd, u, base_next, dt, par, seg, hook_locked, ws=None):
    """Python-facing single step on raw arrays; mutates q and qd."""
    if ws is None:
        ws = make_step_workspace(seg.shape[0])
    return _step(q, qd, u[0], u[1], u[2], base_next, dt, par, seg,
                 hook_locked, *ws)
