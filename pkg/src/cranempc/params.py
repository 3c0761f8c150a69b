"""Physical, actuator and platform-motion parameters with identified defaults.

All defaults reproduce the identified bench values for the boom crane and
its motion platform; angles are stored in radians, lengths in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEG = math.pi / 180.0


@dataclass(frozen=True)
class ActuatorParams:
    """First-order velocity actuator for one crane joint.

    The commanded velocity is ``u * cmd_scale`` with u normalized to [-1, 1];
    joint acceleration is ``(kv*(u*cmd_scale - v) - damping*v - friction)/armature``,
    so the tracking time constant is roughly ``armature / kv``.
    """

    kv: float
    cmd_scale: float      # velocity at full command, rad/s or m/s
    armature: float
    damping: float
    friction_loss: float = 0.0  # Coulomb-like, opposes joint velocity


@dataclass(frozen=True)
class SegmentParams:
    """One rigid cylindrical segment of the hanging payload chain."""

    mass: float
    length: float
    radius: float = 0.025
    attach_offset: float = 0.0   # hinge-to-rod-top distance along the rod axis
    hinge_damping: float = 0.005  # N*m*s/rad at the upper hinge pair

    @property
    def com_offset(self) -> float:
        """Distance from the upper hinge to the segment center of mass."""
        return self.attach_offset + 0.5 * self.length

    @property
    def link_length(self) -> float:
        """Distance from the upper hinge to the lower attachment point."""
        return self.attach_offset + self.length

    @property
    def inertia_perp(self) -> float:
        """Moment of inertia about a transverse axis through the CoM."""
        return self.mass * (3.0 * self.radius**2 + self.length**2) / 12.0

    @property
    def inertia_axial(self) -> float:
        return 0.5 * self.mass * self.radius**2


@dataclass(frozen=True)
class CraneParams:
    """Geometry, payload and joint-range parameters of the bench crane."""

    boom_length: float = 2.384
    mount_height: float = 0.5        # boom pivot height above the base frame
    payload_mass: float = 0.317
    payload_length: float = 0.46
    payload_radius: float = 0.025
    hook_offset: float = 0.0         # hook hinge to payload top
    gravity: float = 9.81
    slew_range: tuple[float, float] = (-86.0 * DEG, 86.0 * DEG)
    luff_range: tuple[float, float] = (0.0, 54.4 * DEG)
    hoist_range: tuple[float, float] = (0.07, 2.0)
    slew_speed_limit: float = 52.7 * DEG
    luff_speed_limit: float = 27.5 * DEG
    hoist_speed_limit: float = 1.0

    def joint_ranges(self) -> np.ndarray:
        return np.array([self.slew_range, self.luff_range, self.hoist_range])


DEFAULT_ACTUATORS = (
    ActuatorParams(kv=7800.0, cmd_scale=0.92, armature=1000.0, damping=0.01),
    ActuatorParams(kv=13000.0, cmd_scale=0.48, armature=2200.0, damping=0.01),
    ActuatorParams(kv=25000.0, cmd_scale=1.0, armature=3200.0, damping=0.0,
                   friction_loss=30.0),
)


@dataclass(frozen=True)
class PlantParams:
    """Complete forward-model parameter set: crane, actuators, payload chain."""

    crane: CraneParams = field(default_factory=CraneParams)
    actuators: tuple[ActuatorParams, ...] = DEFAULT_ACTUATORS
    segments: tuple[SegmentParams, ...] = ()
    hook_locked: bool = False
    cable_hinge_damping: float = 0.05  # N*m*s/rad at the boom-tip pair

    def __post_init__(self):
        if not self.segments:
            object.__setattr__(self, "segments", (SegmentParams(
                mass=self.crane.payload_mass,
                length=self.crane.payload_length,
                radius=self.crane.payload_radius,
                attach_offset=self.crane.hook_offset,
            ),))

    @property
    def n_pendulum_coords(self) -> int:
        return 2 + 2 * len(self.segments)

    @property
    def n_coords(self) -> int:
        return 9 + self.n_pendulum_coords

    def hang_offset(self) -> float:
        """CoM depth of the primary payload below the cable end when hanging."""
        return self.segments[0].com_offset


def attach_secondary_payload(params: PlantParams, mass: float, length: float,
                             radius: float = 0.025) -> PlantParams:
    """Plant-only variant with a second freely swinging segment below the payload.

    The extra hinge pair turns the chain into a triple pendulum; planner-side
    models keep using the unmodified two-segment parameters.
    """
    if mass <= 0.0 or length <= 0.0:
        raise ValueError("secondary payload mass and length must be positive")
    secondary = SegmentParams(mass=mass, length=length, radius=radius)
    return replace(params, segments=params.segments + (secondary,))


# --- base motion -----------------------------------------------------------

PROFILE_PERIODS = {"slow": 12.0, "medium": 7.0, "fast": 5.0}


@dataclass(frozen=True)
class BaseMotionProfile:
    """Periodic 6-DoF platform excitation (sinusoid per axis, shared period)."""

    kind: str = "static"             # static | slow | medium | fast
    period: float = 0.0
    surge_amplitude: float = 0.18
    heave_amplitude: float = 0.04
    pitch_range: tuple[float, float] = (-9.3 * DEG, 7.5 * DEG)
    phase: float = 0.0

    @classmethod
    def named(cls, kind: str, phase: float = 0.0) -> "BaseMotionProfile":
        if kind == "static":
            return cls(kind="static", period=0.0, surge_amplitude=0.0,
                       heave_amplitude=0.0, pitch_range=(0.0, 0.0), phase=phase)
        if kind not in PROFILE_PERIODS:
            raise ValueError(f"unknown profile kind {kind!r}")
        return cls(kind=kind, period=PROFILE_PERIODS[kind], phase=phase)

    @property
    def pitch_mid(self) -> float:
        return 0.5 * (self.pitch_range[0] + self.pitch_range[1])

    @property
    def pitch_amplitude(self) -> float:
        return 0.5 * (self.pitch_range[1] - self.pitch_range[0])


def base_pose(profile: BaseMotionProfile, t: float) -> np.ndarray:
    """Platform pose (surge, sway, heave, roll, pitch, yaw) at time t."""
    pose = np.zeros(6)
    if profile.kind == "static" or profile.period <= 0.0:
        return pose
    w = 2.0 * math.pi / profile.period
    s = math.sin(w * t + profile.phase)
    pose[0] = profile.surge_amplitude * s
    pose[2] = profile.heave_amplitude * s
    pose[4] = profile.pitch_mid + profile.pitch_amplitude * s
    return pose


def base_velocity(profile: BaseMotionProfile, t: float) -> np.ndarray:
    """Analytic time derivative of :func:`base_pose`."""
    vel = np.zeros(6)
    if profile.kind == "static" or profile.period <= 0.0:
        return vel
    w = 2.0 * math.pi / profile.period
    c = w * math.cos(w * t + profile.phase)
    vel[0] = profile.surge_amplitude * c
    vel[2] = profile.heave_amplitude * c
    vel[4] = profile.pitch_amplitude * c
    return vel


# --- flat packing for the jit kernels ---------------------------------------

# per-joint slots: kv, cmd_scale, armature, damping, friction, q_min, q_max
_P_GRAVITY, _P_BOOM, _P_MOUNT = 0, 1, 2
_P_JOINT0 = 3
_P_JOINT_STRIDE = 7
_P_CABLE_DAMPING = _P_JOINT0 + 3 * _P_JOINT_STRIDE
PACKED_PARAM_SIZE = _P_CABLE_DAMPING + 1


def pack_params(params: PlantParams) -> tuple[np.ndarray, np.ndarray, int]:
    """Flatten a PlantParams into (par, seg, hook_locked) kernel arguments."""
    par = np.zeros(PACKED_PARAM_SIZE)
    par[_P_GRAVITY] = params.crane.gravity
    par[_P_BOOM] = params.crane.boom_length
    par[_P_MOUNT] = params.crane.mount_height
    ranges = params.crane.joint_ranges()
    for j, act in enumerate(params.actuators):
        base = _P_JOINT0 + j * _P_JOINT_STRIDE
        par[base + 0] = act.kv
        par[base + 1] = act.cmd_scale
        par[base + 2] = act.armature
        par[base + 3] = act.damping
        par[base + 4] = act.friction_loss
        par[base + 5] = ranges[j, 0]
        par[base + 6] = ranges[j, 1]
    par[_P_CABLE_DAMPING] = params.cable_hinge_damping
    seg = np.zeros((len(params.segments), 6))
    for i, s in enumerate(params.segments):
        seg[i] = (s.mass, s.com_offset, s.link_length,
                  s.inertia_perp, s.inertia_axial, s.hinge_damping)
    return par, seg, int(params.hook_locked)
