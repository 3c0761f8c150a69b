"""Sampling-based MPC for an offshore boom crane: dynamics, planner, harness."""

from .params import (ActuatorParams, BaseMotionProfile, CraneParams,
                     PlantParams, SegmentParams, attach_secondary_payload,
                     base_pose, base_velocity)
from .state import ControlCommand, GeneralizedState

__all__ = [
    "ActuatorParams", "BaseMotionProfile", "CraneParams", "PlantParams",
    "SegmentParams", "attach_secondary_payload", "base_pose", "base_velocity",
    "ControlCommand", "GeneralizedState",
]

__version__ = "0.1.0"
