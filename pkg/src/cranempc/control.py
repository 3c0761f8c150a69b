"""Closed-loop agents and the episode co-simulation.

Two controllers drive the simulated plant through one shared contract
(observe streams, plan, command at 20 Hz): the sampling MPC agent
(estimator -> disturbance forecast -> CEM planner -> policy interpolation)
and a reactive PID baseline (joint-space PD with a nested sway-damping PID).

The episode runner co-simulates plant (1 kHz), measurement streams (100 Hz
mocap / 20 Hz encoders, optionally noisy), and the controller (20 Hz), and
records a 100 Hz log.  In the default deterministic mode the planner gets a
fixed cycle budget per control tick; a threaded mode lets it free-run with
atomic snapshot handoff.
"""
from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .costs import CostConfig
from .dynamics import hanging_state, rpy_matrix, step
from .estimation import (DisturbancePredictor, MeasurementStream,
                         assemble_state)
from .params import (BaseMotionProfile, PlantParams, base_pose, base_velocity,
                     pack_params)
from .planner import CranePlanner, PlannerConfig, SplinePolicy
from .state import GeneralizedState


class UnreachableTargetError(ValueError):
    pass


def transform_point(base6: np.ndarray, p_local: np.ndarray) -> np.ndarray:
    out = np.empty(3)
    kernels._transform_point_into(np.asarray(base6, dtype=float),
                                  p_local[0], p_local[1], p_local[2], out)
    return out


def inverse_target_joints(p_target: np.ndarray, base6: np.ndarray,
                          params: PlantParams, tol: float = 1e-12
                          ) -> np.ndarray:
    """Joint configuration placing the straight-hanging payload at p_target.

    Solved by fixed-point iteration on the boom-tip height (the base may be
    rotated, so the vertical hang offset mixes into the base frame).
    """
    crane = params.crane
    R = rpy_matrix(base6[3], base6[4], base6[5])
    t = np.asarray(base6[:3], dtype=float)
    p = np.asarray(p_target, dtype=float)
    hang = params.hang_offset()
    tip_z = p[2] + 1.0 + hang  # initial guess: one meter of cable
    slew = luff = hoist = 0.0
    for _ in range(200):
        tip_w = np.array([p[0], p[1], tip_z])
        tip_b = R.T @ (tip_w - t)
        rho = math.hypot(tip_b[0], tip_b[1])
        if rho > crane.boom_length:
            raise UnreachableTargetError(
                f"target radius {rho:.3f} m exceeds boom length")
        slew = math.atan2(tip_b[1], tip_b[0])
        luff = math.acos(rho / crane.boom_length)
        zb = crane.mount_height + crane.boom_length * math.sin(luff)
        tip_w_new = t + R @ np.array([tip_b[0], tip_b[1], zb])
        if abs(tip_w_new[2] - tip_z) < tol:
            tip_z = tip_w_new[2]
            break
        tip_z = tip_w_new[2]
    hoist = tip_z - p[2] - hang
    lo, hi = crane.slew_range
    if not (lo <= slew <= hi):
        raise UnreachableTargetError(f"slew {slew:.3f} rad out of range")
    lo, hi = crane.luff_range
    if not (lo <= luff <= hi):
        raise UnreachableTargetError(f"luff {luff:.3f} rad out of range")
    lo, hi = crane.hoist_range
    if not (lo <= hoist <= hi):
        raise UnreachableTargetError(f"hoist {hoist:.3f} m out of range")
    return np.array([slew, luff, hoist])


# --- controllers -------------------------------------------------------------


class _EstimatingController:
    """Shared stream plumbing: encoders at 20 Hz, mocap at 100 Hz."""

    def __init__(self, model: PlantParams, staleness: float = 0.1):
        self.model = model
        self.staleness = staleness
        self.crane_stream = MeasurementStream("crane", 3, 20.0)
        self.payload_stream = MeasurementStream("payload", 4, 100.0)
        self.base_stream = MeasurementStream("base", 6, 100.0)
        self.target_local = np.zeros(3)

    def set_target(self, target_local: np.ndarray) -> None:
        self.target_local = np.asarray(target_local, dtype=float).copy()

    def observe_crane(self, t: float, q: np.ndarray) -> None:
        self.crane_stream.add(t, q)

    def observe_payload(self, t: float, q: np.ndarray) -> None:
        self.payload_stream.add(t, q)

    def observe_base(self, t: float, q: np.ndarray) -> None:
        self.base_stream.add(t, q)

    def estimate(self, t: float) -> GeneralizedState:
        return assemble_state(self.crane_stream, self.payload_stream,
                              self.base_stream, t, staleness=self.staleness)

    def plan(self, t: float) -> None:  # overridden by the MPC agent
        pass

    def diagnostics(self) -> dict:
        return {}


class MpcAgent(_EstimatingController):
    """Receding-horizon agent: estimate, forecast, CEM-plan, interpolate.

    ``command`` only interpolates the latest published policy and never
    blocks on planning; before the first cycle completes it returns zeros.
    """

    def __init__(self, model: PlantParams, cost: CostConfig,
                 planner_cfg: PlannerConfig, seed: int = 0,
                 cycles_per_tick: int = 2, staleness: float = 0.1):
        super().__init__(model, staleness)
        self.planner = CranePlanner(model, cost, planner_cfg)
        self.predictor = DisturbancePredictor(
            buffer_dt=0.01, span=24.0, min_lag_s=1.0)
        self.seed = seed
        self.cycles_per_tick = cycles_per_tick
        self._policy: SplinePolicy | None = None
        self._lock = threading.Lock()
        self._tick = 0
        self._last_plan_ms = 0.0
        self._last_cost = math.nan

    def observe_base(self, t: float, q: np.ndarray) -> None:
        super().observe_base(t, q)
        self.predictor.observe(t, q)

    def prefill_history(self, profile: BaseMotionProfile, t_now: float,
                        rng: np.random.Generator | None = None,
                        sigma_pos: float = 0.0, sigma_ang: float = 0.0) -> None:
        """Seed the disturbance buffer as if the platform ran beforehand."""
        n = self.predictor.buffer.capacity
        dt = self.predictor.buffer.dt
        for k in range(n, 0, -1):
            pose = base_pose(profile, t_now - k * dt)
            if rng is not None:
                pose = pose.copy()
                pose[:3] += rng.normal(0.0, sigma_pos, 3)
                pose[3:] += rng.normal(0.0, sigma_ang, 3)
            self.predictor.buffer.append(pose)

    def snapshot(self, t: float):
        """Atomic (state, forecast, target) input snapshot for one cycle."""
        with self._lock:
            x0 = self.estimate(t)
            fc = self.predictor.forecast(self.planner.cfg.horizon_steps,
                                         self.planner.cfg.model_dt,
                                         origin_time=t)
            return x0, fc, self.target_local.copy()

    def plan_once(self, t: float, seed=None) -> None:
        """One full CEM cycle from the latest snapshot; publishes the policy."""
        x0, fc, target = self.snapshot(t)
        if seed is None:
            seed = np.random.SeedSequence((self.seed, self._tick))
        prev = self._policy
        policy, diag = self.planner.plan_cycle(x0, fc.poses, target, t, seed,
                                               prev_policy=prev)
        with self._lock:
            self._policy = policy
            self._last_plan_ms = diag.planning_time_ms
            self._last_cost = diag.nominal_costs[-1]
        self._tick += 1

    def plan(self, t: float) -> None:
        for c in range(self.cycles_per_tick):
            self.plan_once(t, seed=np.random.SeedSequence((self.seed, self._tick, c)))

    def command(self, t: float) -> np.ndarray:
        with self._lock:
            policy = self._policy
        if policy is None:
            return np.zeros(3)
        return np.clip(policy.action_at(t), -1.0, 1.0)

    def diagnostics(self) -> dict:
        with self._lock:
            return {"plan_ms": self._last_plan_ms, "plan_cost": self._last_cost}


class PlannerThread:
    """Free-running planner worker for the wall-clock (benchmark) mode."""

    def __init__(self, agent: MpcAgent):
        self.agent = agent
        self._stop = threading.Event()
        self._clock = lambda: 0.0
        self._thread: threading.Thread | None = None
        self.cycles = 0

    def start(self, clock) -> None:
        self._clock = clock
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                self.agent.plan_once(self._clock())
                self.cycles += 1
            except Exception:
                time.sleep(0.005)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


@dataclass(frozen=True)
class PidAxisGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0


@dataclass(frozen=True)
class PidConfig:
    """Joint-space PD plus nested sway-damping PID, per actuator.

    Defaults come from the offline grid search in harness.tune_pid_grid
    (non-negative gains, minimizing mean position error on the slow
    profile over 5 seeds x 4 switches).
    """

    joint: tuple[PidAxisGains, ...] = (
        PidAxisGains(kp=4.0, kd=0.5),    # slew
        PidAxisGains(kp=6.4, kd=0.5),    # luff
        PidAxisGains(kp=4.0, kd=0.5),    # hoist
    )
    sway: tuple[PidAxisGains, ...] = (
        PidAxisGains(kp=2.0, ki=0.2, kd=0.0),   # tangential -> slew
        PidAxisGains(kp=2.0, ki=0.2, kd=0.0),   # radial -> luff
        PidAxisGains(),                          # hoist: unused by default
    )
    integrator_clamp: float = 0.5

    def __post_init__(self):
        for group in (self.joint, self.sway):
            for g in group:
                if g.kp < 0.0 or g.ki < 0.0 or g.kd < 0.0:
                    raise ValueError("PID gains must be non-negative")
        if self.integrator_clamp <= 0.0:
            raise ValueError("integrator clamp must be positive")


class PidController(_EstimatingController):
    """Reactive baseline: joint PD tracking with nested sway damping.

    Sway is decomposed into tangential (drives slew) and radial (drives
    luff) components of the boom-tip-to-payload vector relative to the
    current boom azimuth; each feeds its own PID with clamped integrator.
    """

    def __init__(self, model: PlantParams, cfg: PidConfig | None = None,
                 staleness: float = 0.1, tick_dt: float = 0.05):
        super().__init__(model, staleness)
        self.cfg = cfg or PidConfig()
        self.tick_dt = tick_dt
        self._integ = np.zeros(3)
        self._prev_sway: np.ndarray | None = None
        self._par, self._seg, _ = pack_params(model)

    def reset(self) -> None:
        self._integ[:] = 0.0
        self._prev_sway = None

    def _sway_components(self, st: GeneralizedState) -> np.ndarray:
        q = np.concatenate([st.q_base, st.q_crane, st.q_payload[:4]])
        qd = np.concatenate([st.qdot[:9], st.qdot[9:13]])
        tip = np.empty(3); vtip = np.empty(3); com = np.empty(3); vcom = np.empty(3)
        kernels._payload_state(q, qd, self._par, self._seg, tip, vtip, com, vcom)
        b = com - tip
        n = np.linalg.norm(b)
        if n <= 1e-9:
            return np.zeros(2)
        azimuth = st.q_crane[0] + st.q_base[5]
        radial = np.array([math.cos(azimuth), math.sin(azimuth)])
        tangential = np.array([-radial[1], radial[0]])
        return np.array([
            math.asin(max(-1.0, min(1.0, float(np.dot(b[:2], tangential)) / n))),
            math.asin(max(-1.0, min(1.0, float(np.dot(b[:2], radial)) / n))),
        ])

    def command(self, t: float) -> np.ndarray:
        try:
            st = self.estimate(t)
        except Exception:
            return np.zeros(3)
        target_w = transform_point(st.q_base, self.target_local)
        try:
            refs = inverse_target_joints(target_w, st.q_base, self.model)
        except UnreachableTargetError:
            return np.zeros(3)
        u = np.zeros(3)
        for j in range(3):
            g = self.cfg.joint[j]
            u[j] = g.kp * (refs[j] - st.q_crane[j]) - g.kd * st.qdot[6 + j]
        sway = self._sway_components(st)
        if self._prev_sway is None:
            rate = np.zeros(2)
        else:
            rate = (sway - self._prev_sway) / self.tick_dt
        self._prev_sway = sway.copy()
        clamp = self.cfg.integrator_clamp
        for axis in range(2):
            g = self.cfg.sway[axis]
            self._integ[axis] = float(np.clip(
                self._integ[axis] + sway[axis] * self.tick_dt, -clamp, clamp))
            corr = (g.kp * sway[axis] + g.ki * self._integ[axis]
                    + g.kd * rate[axis])
            if axis == 0:
                u[0] += corr
            else:
                # +luff raises the boom and pulls the tip inward (radius
                # shrinks), so an outward radial sway needs negative luff
                u[1] -= corr
        return np.clip(u, -1.0, 1.0)


# --- episode co-simulation ----------------------------------------------------


LOG_COLUMNS = (
    ["time"]
    + [f"q{i}" for i in range(13)] + [f"qd{i}" for i in range(13)]
    + ["u_slew", "u_luff", "u_hoist"]
    + ["r_target", "r_sway", "r_vel", "r_ctrl", "r_tilt",
       "blend_track", "blend_vel", "cost_total"]
    + ["target_x", "target_y", "target_z", "payload_x", "payload_y",
       "payload_z", "tilt_deg", "plan_ms", "plan_cost"]
)


@dataclass
class EpisodeLog:
    """100 Hz record of one closed-loop run plus scenario metadata."""

    columns: list[str]
    data: np.ndarray
    seed: int
    controller: str
    profile: str
    switch_interval: float
    switch_times: list[float]
    targets_local: list[list[float]]
    config_hash: str = ""
    failure: str | None = None
    failure_time: float | None = None

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def save_csv(self, path) -> None:
        header = (f"# cranempc-episode-v1 controller={self.controller} "
                  f"profile={self.profile} seed={self.seed} "
                  f"interval={self.switch_interval} "
                  f"config={self.config_hash}\n") + ",".join(self.columns)
        np.savetxt(path, self.data, delimiter=",", header=header, comments="")

    @classmethod
    def load_csv(cls, path) -> "EpisodeLog":
        with open(path) as fh:
            meta_line = fh.readline().strip()
            columns = fh.readline().strip().split(",")
        if not meta_line.startswith("# cranempc-episode-v1"):
            raise ValueError(f"{path}: not a cranempc episode log")
        meta = dict(tok.split("=", 1) for tok in meta_line.split()[2:])
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        interval = float(meta.get("interval", 20.0))
        t_end = data[-1, 0] if len(data) else 0.0
        n_switches = max(1, int(round((t_end + 1e-9) // interval)) + 1) \
            if interval > 0 else 1
        switch_times = [k * interval for k in range(n_switches)
                        if k * interval <= t_end]
        return cls(columns=columns, data=data,
                   seed=int(meta.get("seed", 0)),
                   controller=meta.get("controller", "?"),
                   profile=meta.get("profile", "?"),
                   switch_interval=interval, switch_times=switch_times,
                   targets_local=[], config_hash=meta.get("config", ""))


@dataclass
class NoiseConfig:
    """Sensor noise injected by the harness (mocap + encoder scale)."""

    enabled: bool = True
    sigma_pos: float = 0.002          # m, payload/base translation channels
    sigma_joint_deg: float = 0.05     # crane joint encoders
    sigma_hoist: float = 0.0005       # m, hoist encoder
    sigma_payload_angle_deg: float = 0.1
    sigma_base_angle_deg: float = 0.05


def run_episode(scenario, controller, duration: float, seed: int,
                plant_dt: float = 1e-3, log_rate: float = 100.0,
                control_rate: float = 20.0) -> EpisodeLog:
    """Fixed-step co-simulation of plant, sensors and controller.

    ``scenario`` provides profile, platform-local targets, switch interval,
    plant parameters and noise settings (see harness.Scenario).  The target
    alternates every ``switch_interval`` seconds starting at t=0, so each
    interval is one transit-and-settle trajectory.
    """
    profile: BaseMotionProfile = scenario.profile
    plant: PlantParams = scenario.plant_params
    noise: NoiseConfig = scenario.noise
    targets = [np.asarray(tl, dtype=float) for tl in scenario.targets_local]
    interval = float(scenario.switch_interval)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 9001)))
    sig_j = math.radians(noise.sigma_joint_deg) if noise.enabled else 0.0
    sig_pa = math.radians(noise.sigma_payload_angle_deg) if noise.enabled else 0.0
    sig_ba = math.radians(noise.sigma_base_angle_deg) if noise.enabled else 0.0
    sig_p = noise.sigma_pos if noise.enabled else 0.0
    sig_h = noise.sigma_hoist if noise.enabled else 0.0

    base0 = base_pose(profile, 0.0)
    start_target_w = transform_point(base0, targets[0])
    model = controller.model if hasattr(controller, "model") else plant
    joints0 = inverse_target_joints(start_target_w, base0, model)
    state = hanging_state(plant, joints0, base0, base_velocity(profile, 0.0))

    if hasattr(controller, "prefill_history"):
        controller.prefill_history(profile, 0.0, rng if noise.enabled else None,
                                   sigma_pos=sig_p, sigma_ang=sig_ba)
    if hasattr(controller, "reset"):
        controller.reset()

    packed = pack_params(plant)
    ws = kernels.make_step_workspace(packed[1].shape[0])
    par_m, seg_m, _ = pack_params(model)
    cp = (controller.planner.cost.packed() if isinstance(controller, MpcAgent)
          else CostConfig().packed())

    n_steps = int(round(duration / plant_dt))
    meas_every = int(round(1.0 / (log_rate * plant_dt)))
    ctrl_every = int(round(1.0 / (control_rate * plant_dt)))
    n_rows = n_steps // meas_every + 1
    data = np.zeros((n_rows, len(LOG_COLUMNS)))
    switch_times: list[float] = []

    u = np.zeros(3)
    target_idx = -1
    row = 0
    failure = None
    failure_time = None
    tip = np.empty(3); vtip = np.empty(3); com = np.empty(3); vcom = np.empty(3)

    for k in range(n_steps + 1):
        t = k * plant_dt
        # target switching at interval boundaries (t=0 switches away from start)
        n_intervals = max(1, int(round(duration / interval)))
        due = min(int(t // interval), n_intervals - 1) if interval > 0 else 0
        while target_idx < due:
            target_idx += 1
            tgt = targets[(target_idx + 1) % len(targets)]
            controller.set_target(tgt)
            switch_times.append(t)
        target_local = targets[(target_idx + 1) % len(targets)]

        if k % meas_every == 0:
            pm = state.q_payload[:4] + rng.normal(0.0, sig_pa, 4)
            bm = state.q_base.copy()
            bm[:3] += rng.normal(0.0, sig_p, 3)
            bm[3:] += rng.normal(0.0, sig_ba, 3)
            controller.observe_payload(t, pm)
            controller.observe_base(t, bm)
        if k % ctrl_every == 0:
            cm = state.q_crane.copy()
            cm[0] += rng.normal(0.0, sig_j)
            cm[1] += rng.normal(0.0, sig_j)
            cm[2] += rng.normal(0.0, sig_h)
            controller.observe_crane(t, cm)
            try:
                controller.plan(t)
                u = np.clip(np.asarray(controller.command(t), dtype=float),
                            -1.0, 1.0)
            except Exception as exc:  # recorded, episode aborted
                failure = f"{type(exc).__name__}: {exc}"
                failure_time = t
                break

        if k % meas_every == 0:
            q = np.concatenate([state.q_base, state.q_crane, state.q_payload])
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(state.qdot))):
                failure = "NonFiniteState"
                failure_time = t
                break
            target_w = transform_point(state.q_base, target_local)
            base_next_true = base_pose(profile, t + plant_dt)
            target_w_next = transform_point(base_next_true, target_local)
            vplat = (target_w_next - target_w) / plant_dt
            terms = kernels._state_cost(q, state.qdot, par_m, seg_m, cp,
                                        target_w, vplat[0], vplat[1], vplat[2],
                                        u[0], u[1], tip, vtip, com, vcom)
            diag = controller.diagnostics()
            a1, b1 = state.q_payload[2], state.q_payload[3]
            tilt_deg = math.degrees(math.acos(
                max(-1.0, min(1.0, math.cos(a1) * math.cos(b1)))))
            data[row, 0] = t
            data[row, 1:14] = q[:13]
            data[row, 14:27] = state.qdot[:13]
            data[row, 27:30] = u
            data[row, 30:38] = terms
            data[row, 38:41] = target_w
            data[row, 41:44] = com
            data[row, 44] = tilt_deg
            data[row, 45] = diag.get("plan_ms", 0.0)
            data[row, 46] = diag.get("plan_cost", 0.0)
            row += 1

        if k == n_steps:
            break
        base_next = base_pose(profile, t + plant_dt)
        try:
            state = step(state, u, base_next, plant, plant_dt, packed, ws)
        except Exception as exc:
            failure = f"{type(exc).__name__}: {exc}"
            failure_time = t
            break

    return EpisodeLog(
        columns=list(LOG_COLUMNS), data=data[:row], seed=int(seed),
        controller=type(controller).__name__, profile=profile.kind,
        switch_interval=interval, switch_times=switch_times,
        targets_local=[list(map(float, tl)) for tl in targets],
        failure=failure, failure_time=failure_time)
