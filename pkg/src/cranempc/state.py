"""Generalized system state: platform pose, crane joints, pendulum angles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GeneralizedState:
    """Full state of base + crane + payload chain.

    ``q_payload`` holds the hinge-pair angles of the hanging chain: the
    boom-tip (cable) pair first, then one pair per rigid segment.  The
    nominal single-payload system has 4 payload coordinates and a 26-dim
    state; a plant with a secondary payload carries 6.
    """

    q_base: np.ndarray        # surge, sway, heave [m]; roll, pitch, yaw [rad]
    q_crane: np.ndarray       # slew [rad], luff [rad], hoist length [m]
    q_payload: np.ndarray     # hinge pairs, [rad]
    qdot: np.ndarray          # matching velocities
    time: float = 0.0

    @classmethod
    def zeros(cls, n_payload: int = 4, hoist: float = 1.0,
              time: float = 0.0) -> "GeneralizedState":
        st = cls(q_base=np.zeros(6), q_crane=np.zeros(3),
                 q_payload=np.zeros(n_payload),
                 qdot=np.zeros(9 + n_payload), time=time)
        st.q_crane[2] = hoist
        return st

    @property
    def n_coords(self) -> int:
        return 9 + self.q_payload.shape[0]

    def positions(self) -> np.ndarray:
        return np.concatenate([self.q_base, self.q_crane, self.q_payload])

    def as_vector(self) -> np.ndarray:
        """Flat [q, qdot] vector (26-dim for the nominal system)."""
        return np.concatenate([self.positions(), self.qdot])

    @classmethod
    def from_vector(cls, vec: np.ndarray, time: float = 0.0) -> "GeneralizedState":
        n = vec.shape[0] // 2
        q, qd = vec[:n], vec[n:]
        return cls(q_base=q[:6].copy(), q_crane=q[6:9].copy(),
                   q_payload=q[9:].copy(), qdot=qd.copy(), time=time)

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.q_base.copy(), self.q_crane.copy(),
                                self.q_payload.copy(), self.qdot.copy(),
                                self.time)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("non-finite entries in state")
        if self.qdot.shape[0] != self.n_coords:
            raise ValueError("velocity dimension mismatch")


@dataclass
class ControlCommand:
    """Normalized actuator velocity commands in [-1, 1] per joint."""

    u_slew: float = 0.0
    u_luff: float = 0.0
    u_hoist: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.u_slew, self.u_luff, self.u_hoist])

    @classmethod
    def from_array(cls, u: np.ndarray) -> "ControlCommand":
        return cls(float(u[0]), float(u[1]), float(u[2]))

    def clamped(self) -> "ControlCommand":
        u = np.clip(self.as_array(), -1.0, 1.0)
        return ControlCommand.from_array(u)
