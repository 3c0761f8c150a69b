"""Forward model of the base-mounted boom crane with a hanging payload chain.

Composes the jit kernels into the public operations: boom-tip kinematics with
analytic Jacobian, first-order actuator updates, pendulum accelerations,
energy, and the fixed-step semi-implicit integrator.  The platform pose is a
prescribed input, not a simulated DoF.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .params import ActuatorParams, PlantParams, pack_params
from .state import GeneralizedState


class DegenerateConfigurationError(RuntimeError):
    """Mass matrix not positive definite (e.g. cable length at/below zero)."""


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    sy, cy = math.sin(yaw), math.cos(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def boom_tip_pose(q_base: np.ndarray, q_crane: np.ndarray,
                  params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Boom-tip world position and its 3x9 Jacobian w.r.t. (base, crane).

    The hoist column is zero: cable length does not move the tip.
    """
    q_base = np.asarray(q_base, dtype=float)
    q_crane = np.asarray(q_crane, dtype=float)
    if not (np.all(np.isfinite(q_base)) and np.all(np.isfinite(q_crane))):
        raise ValueError("non-finite kinematics input")
    boom = params.crane.boom_length
    mount = params.crane.mount_height
    pos = np.empty(3)
    kernels._boom_tip_into(q_base, q_crane[0], q_crane[1], boom, mount, pos)

    R = rpy_matrix(q_base[3], q_base[4], q_base[5])
    ct, st = math.cos(q_crane[0]), math.sin(q_crane[0])
    cl, sl = math.cos(q_crane[1]), math.sin(q_crane[1])
    m = np.array([boom * cl * ct, boom * cl * st, mount + boom * sl])
    rm = R @ m

    jac = np.zeros((3, 9))
    jac[:, 0:3] = np.eye(3)
    # d(R m)/d(angle) = axis x (R m), with the axis of each elemental rotation
    sy, cy = math.sin(q_base[5]), math.cos(q_base[5])
    sp, cp = math.sin(q_base[4]), math.cos(q_base[4])
    axis_roll = np.array([cy * cp, sy * cp, -sp])   # Rz Ry x_hat
    axis_pitch = np.array([-sy, cy, 0.0])           # Rz y_hat
    axis_yaw = np.array([0.0, 0.0, 1.0])
    jac[:, 3] = np.cross(axis_roll, rm)
    jac[:, 4] = np.cross(axis_pitch, rm)
    jac[:, 5] = np.cross(axis_yaw, rm)
    jac[:, 6] = R @ np.array([-boom * cl * st, boom * cl * ct, 0.0])
    jac[:, 7] = R @ np.array([-boom * sl * ct, -boom * sl * st, boom * cl])
    return pos, jac


def boom_tip_velocity(state: GeneralizedState, params: PlantParams) -> np.ndarray:
    out = np.empty(3)
    kernels._boom_tip_vel_into(state.q_base, state.qdot[:6], state.q_crane[0],
                               state.q_crane[1], state.qdot[6], state.qdot[7],
                               params.crane.boom_length,
                               params.crane.mount_height, out)
    return out


def actuator_step(qdot_joint: float, u_cmd: float, p: ActuatorParams,
                  dt: float) -> float:
    """First-order velocity tracking update for one actuated joint."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return kernels._actuator_vel(qdot_joint, u_cmd, p.kv, p.cmd_scale,
                                 p.armature, p.damping, p.friction_loss, dt)


def pendulum_dynamics(state: GeneralizedState, pivot_acceleration: np.ndarray,
                      params: PlantParams) -> np.ndarray:
    """Accelerations of the unactuated hinge-pair coordinates."""
    par, seg, locked = pack_params(params)
    l = float(state.q_crane[2])
    if l < params.crane.hoist_range[0] * 0.5:
        raise DegenerateConfigurationError(f"cable length {l} below minimum")
    ndir = seg.shape[0] + 1
    n = 2 * ndir
    acc = np.empty(n)
    dirs = np.empty((ndir, 3)); dja = np.empty((ndir, 3))
    djb = np.empty((ndir, 3)); kq = np.empty((ndir, 3))
    M = np.empty((n, n)); rhs = np.empty(n); coef = np.empty(ndir)
    pa = np.asarray(pivot_acceleration, dtype=float)
    ok = kernels._pend_accel(state.q_payload, state.qdot[9:], l,
                             float(state.qdot[8]), 0.0, pa[0], pa[1], pa[2],
                             params.crane.gravity,
                             params.cable_hinge_damping, seg, locked, acc,
                             dirs, dja, djb, kq, M, rhs, coef)
    if not ok:
        raise DegenerateConfigurationError("singular pendulum mass matrix")
    return acc


def total_energy(state: GeneralizedState, params: PlantParams) -> float:
    """Payload-chain mechanical energy with potential zero at the pivot."""
    state.validate()
    par, seg, _ = pack_params(params)
    vtip = boom_tip_velocity(state, params)
    return kernels._total_energy(state.q_payload, state.qdot[9:],
                                 float(state.q_crane[2]), float(state.qdot[8]),
                                 vtip[0], vtip[1], vtip[2],
                                 params.crane.gravity, seg)


def step(state: GeneralizedState, u: np.ndarray, base_pose_next: np.ndarray,
         params: PlantParams, dt: float = 0.01,
         _packed=None, _ws=None) -> GeneralizedState:
    """One semi-implicit Euler step of the full system.

    ``_packed``/``_ws`` allow callers that step in a tight loop to reuse the
    packed parameters and scratch arrays.
    """
    if _packed is None:
        _packed = pack_params(params)
    par, seg, locked = _packed
    nxt = state.copy()
    q = np.concatenate([nxt.q_base, nxt.q_crane, nxt.q_payload])
    qd = nxt.qdot
    u = np.asarray(u, dtype=float)
    ok = kernels.step_arrays(q, qd, u, np.asarray(base_pose_next, dtype=float),
                             dt, par, seg, locked, _ws)
    if not ok:
        raise DegenerateConfigurationError("singular pendulum mass matrix in step")
    nxt.q_base = q[:6]
    nxt.q_crane = q[6:9]
    nxt.q_payload = q[9:]
    nxt.qdot = qd
    nxt.time = state.time + dt
    return nxt


def payload_positions(state: GeneralizedState, params: PlantParams
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(tip, tip velocity, primary CoM, CoM velocity) in world coordinates."""
    par, seg, _ = pack_params(params)
    q = np.concatenate([state.q_base, state.q_crane, state.q_payload])
    tip = np.empty(3); vtip = np.empty(3); com = np.empty(3); vcom = np.empty(3)
    kernels._payload_state(q, state.qdot, par, seg, tip, vtip, com, vcom)
    return tip, vtip, com, vcom


def payload_tilt_deg(state: GeneralizedState) -> float:
    """Angle between the primary payload axis and the world vertical, degrees."""
    a, b = state.q_payload[2], state.q_payload[3]
    c = max(-1.0, min(1.0, math.cos(a) * math.cos(b)))
    return math.degrees(math.acos(c))


def sway_angle_deg(state: GeneralizedState, params: PlantParams) -> float:
    """Cable sway angle (boom tip to payload CoM vs vertical), degrees."""
    tip, _, com, _ = payload_positions(state, params)
    b = com - tip
    n = np.linalg.norm(b)
    if n <= 0.0:
        raise ValueError("degenerate boom-tip-to-payload vector")
    return math.degrees(math.asin(min(1.0, np.hypot(b[0], b[1]) / n)))


def hanging_state(params: PlantParams, q_crane: np.ndarray,
                  base: np.ndarray | None = None,
                  base_vel: np.ndarray | None = None,
                  time: float = 0.0) -> GeneralizedState:
    """State with the chain at rest straight below the boom tip."""
    n_pend = params.n_pendulum_coords
    st = GeneralizedState.zeros(n_payload=n_pend, time=time)
    st.q_crane = np.asarray(q_crane, dtype=float).copy()
    if base is not None:
        st.q_base = np.asarray(base, dtype=float).copy()
    if base_vel is not None:
        st.qdot[:6] = np.asarray(base_vel, dtype=float)
    return st
