"""Adaptive running cost: tracking, sway, velocity matching, effort, tilt.

Five residuals are combined with distance-dependent weights.  A tanh blend
smoothly hands priority from target tracking + sway damping (far away) to
relative-velocity matching (near the target), avoiding the discontinuity of
hard cost switching.

Angle residuals (sway, tilt) enter the cost in radians; with the 2.0 / 3.0
smoothing offsets the corresponding terms are flat near vertical and grow
linearly only for violent swings, which is what lets the planner trade a
small transient swing for target progress.  Benchmark *metrics* report
angles in degrees; only the cost works in radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .state import ControlCommand


class DegenerateGeometryError(ValueError):
    """Raised when the boom-tip-to-payload vector has zero length."""


@dataclass(frozen=True)
class CostConfig:
    track_weight: float = 200.0        # scales tracking and sway terms
    vel_weight: float = 350.0          # scales relative-velocity term
    proximity_threshold: float = 0.1   # m, center of the blend transition
    blend_in_sharpness: float = 10.0   # 1/m, tracking-side tanh slope
    blend_out_sharpness: float = 5.0   # 1/m, velocity-side tanh slope
    track_margin: float = 0.05         # m, pseudo-Huber flat radius
    sway_offset: float = 2.0           # sway smoothing offset (radian scale)
    tilt_offset: float = 3.0           # tilt smoothing offset (radian scale)
    ctrl_weight: float = 1.0
    tilt_weight: float = 500.0

    def packed(self) -> np.ndarray:
        """Flat layout consumed by the rollout kernels."""
        return np.array([
            self.track_weight, self.vel_weight, self.proximity_threshold,
            self.blend_in_sharpness, self.blend_out_sharpness,
            self.track_margin, self.sway_offset, self.tilt_offset,
            self.ctrl_weight, self.tilt_weight,
        ])


@dataclass
class CostBreakdown:
    """Per-term residuals, blend weights and the weighted total."""

    r_target: float
    r_sway: float
    r_vel: float
    r_ctrl: float
    r_tilt: float
    track_blend: float      # in (0, 1), rises with distance
    vel_blend: float        # in (1, 2), falls with distance
    total: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r_target, self.r_sway, self.r_vel, self.r_ctrl,
                         self.r_tilt, self.track_blend, self.vel_blend,
                         self.total])


UPRIGHT_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class TaskContext:
    """Geometric quantities the running cost consumes, world frame."""

    p_target: np.ndarray
    p_payload: np.ndarray
    v_payload: np.ndarray
    v_platform: np.ndarray
    tip_to_payload: np.ndarray
    payload_quat: np.ndarray
    upright_quat: np.ndarray = field(default_factory=lambda: UPRIGHT_QUAT.copy())


def tracking_blend(distance: float, cfg: CostConfig) -> float:
    """Weight on tracking/sway terms; ~0.12 at the target, ->1 far away."""
    return 0.5 * (math.tanh(cfg.blend_in_sharpness
                            * (distance - cfg.proximity_threshold)) + 1.0)


def velocity_blend(distance: float, cfg: CostConfig) -> float:
    """Weight on the velocity-matching term; ->2 at the target, ->1 far away."""
    return 0.5 * (math.tanh(-cfg.blend_out_sharpness
                            * (distance - cfg.proximity_threshold)) + 1.0) + 1.0


def sway_angle_rad(tip_to_payload: np.ndarray) -> float:
    """Angle between the boom-tip-to-payload vector and vertical, radians."""
    b = np.asarray(tip_to_payload, dtype=float)
    n = np.linalg.norm(b)
    if n <= 0.0:
        raise DegenerateGeometryError("zero-length boom-tip-to-payload vector")
    return math.asin(min(1.0, math.hypot(b[0], b[1]) / n))


def sway_angle_deg(tip_to_payload: np.ndarray) -> float:
    """Sway angle in degrees (reporting convenience)."""
    return math.degrees(sway_angle_rad(tip_to_payload))


def quat_tilt_rad(q: np.ndarray, q_ref: np.ndarray = UPRIGHT_QUAT) -> float:
    """Geodesic rotation angle between two unit quaternions, radians."""
    d = abs(float(np.dot(q, q_ref)))
    return 2.0 * math.acos(min(1.0, d))


def hinge_pair_quat(a: float, b: float) -> np.ndarray:
    """Orientation quaternion of a body rotated by Rx(a) then Ry(b)."""
    ca, sa = math.cos(0.5 * a), math.sin(0.5 * a)
    cb, sb = math.cos(0.5 * b), math.sin(0.5 * b)
    return np.array([ca * cb, sa * cb, ca * sb, sa * sb])


def running_cost(ctx: TaskContext, u: ControlCommand | np.ndarray,
                 cfg: CostConfig) -> CostBreakdown:
    """All five residuals and the blended total for one state/action pair."""
    if isinstance(u, ControlCommand):
        u = u.as_array()
    dist = float(np.linalg.norm(np.asarray(ctx.p_payload) - np.asarray(ctx.p_target)))
    sway = sway_angle_rad(ctx.tip_to_payload)
    tilt = quat_tilt_rad(ctx.payload_quat, ctx.upright_quat)
    relv = np.asarray(ctx.v_payload) - np.asarray(ctx.v_platform)
    relv2 = float(np.dot(relv, relv))
    terms = kernels._cost_terms(dist, sway, tilt, relv2,
                                float(u[0]), float(u[1]), cfg.packed())
    return CostBreakdown(*terms)


def terminal_cost(ctx: TaskContext, cfg: CostConfig) -> float:
    """Horizon-end cost: the running cost of the state with zero command."""
    return running_cost(ctx, np.zeros(3), cfg).total
