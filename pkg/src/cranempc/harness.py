"""Scenarios, metrics and experiment drivers (benchmark, iteration ablation).

The target-switching task: two targets mounted 1 m apart on the (possibly
moving) platform, switched every 20 s; per switch trajectory the mean xy
position error and mean payload tilt over the second half of the interval
are the per-replication metrics, aggregated as median (IQR).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .configio import config_hash
from .control import (EpisodeLog, MpcAgent, NoiseConfig, PidConfig,
                      PidController, run_episode)
from .costs import CostConfig
from .dynamics import hanging_state, payload_positions
from .estimation import DisturbancePredictor
from .params import (BaseMotionProfile, PlantParams, attach_secondary_payload,
                     base_pose)
from .planner import CranePlanner, PlannerConfig
from .control import inverse_target_joints, transform_point

PROFILES = ("static", "slow", "medium", "fast")

# platform-local targets, 1 m apart, comfortably inside the workspace
DEFAULT_TARGETS = ([1.9, 0.5, 0.4], [1.9, -0.5, 0.4])

SECONDARY_PAYLOAD = {"mass": 0.23, "length": 0.35}


class IncompleteLogError(RuntimeError):
    pass


@dataclass
class Scenario:
    """One experiment cell: platform motion, targets, plant variant, noise."""

    profile_kind: str = "static"
    targets_local: tuple = DEFAULT_TARGETS
    switch_interval: float = 20.0
    n_switches: int = 10
    seeds: tuple[int, ...] = (0,)
    plant_variant: str = "nominal"      # nominal | secondary
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    base_phase: float = 0.0

    def __post_init__(self):
        if self.switch_interval <= 0:
            raise ValueError("switch interval must be positive")
        if self.profile_kind not in PROFILES:
            raise ValueError(f"unknown profile {self.profile_kind!r}")

    @property
    def profile(self) -> BaseMotionProfile:
        return BaseMotionProfile.named(self.profile_kind, phase=self.base_phase)

    @property
    def duration(self) -> float:
        return self.switch_interval * self.n_switches

    @property
    def plant_params(self) -> PlantParams:
        nominal = PlantParams()
        if self.plant_variant == "secondary":
            return attach_secondary_payload(nominal, **SECONDARY_PAYLOAD)
        return nominal


@dataclass
class MetricsSummary:
    """Per-trajectory means and their aggregates for one episode set."""

    pos_errors: np.ndarray          # per switch trajectory, m
    tilt_errors: np.ndarray         # per switch trajectory, deg
    pos_median: float
    pos_iqr: float
    tilt_median: float
    tilt_iqr: float
    plan_ms_mean: float
    plan_ms_p95: float
    saturation_fraction: float
    completed: bool

    def as_dict(self) -> dict:
        return {
            "pos_median": self.pos_median, "pos_iqr": self.pos_iqr,
            "tilt_median": self.tilt_median, "tilt_iqr": self.tilt_iqr,
            "pos_mean": float(np.mean(self.pos_errors)),
            "tilt_mean": float(np.mean(self.tilt_errors)),
            "plan_ms_mean": self.plan_ms_mean, "plan_ms_p95": self.plan_ms_p95,
            "saturation_fraction": self.saturation_fraction,
            "n_trajectories": int(len(self.pos_errors)),
            "completed": self.completed,
        }


def compute_metrics(log: EpisodeLog, scenario: Scenario,
                    settle_start: float = 10.0) -> MetricsSummary:
    """Mean errors over the [settle_start, interval) tail of each switch."""
    if log.failure is not None:
        raise IncompleteLogError(
            f"episode failed at t={log.failure_time}: {log.failure}")
    t = log.col("time")
    expected_end = scenario.duration
    if t[-1] < expected_end - 0.5:
        raise IncompleteLogError(
            f"log ends at {t[-1]:.2f}s, expected {expected_end:.2f}s")
    perr = np.hypot(log.col("payload_x") - log.col("target_x"),
                    log.col("payload_y") - log.col("target_y"))
    tilt = log.col("tilt_deg")
    pos_means, tilt_means = [], []
    for ts in log.switch_times:
        sel = (t >= ts + settle_start) & (t < ts + scenario.switch_interval)
        if not np.any(sel):
            raise IncompleteLogError(f"no samples in window after {ts}s switch")
        pos_means.append(float(perr[sel].mean()))
        tilt_means.append(float(tilt[sel].mean()))
    pos = np.array(pos_means)
    ang = np.array(tilt_means)
    u = np.abs(log.data[:, [27, 28, 29]])
    plan_ms = log.col("plan_ms")
    plan_ms = plan_ms[plan_ms > 0.0]
    return MetricsSummary(
        pos_errors=pos, tilt_errors=ang,
        pos_median=float(np.median(pos)),
        pos_iqr=float(np.percentile(pos, 75) - np.percentile(pos, 25)),
        tilt_median=float(np.median(ang)),
        tilt_iqr=float(np.percentile(ang, 75) - np.percentile(ang, 25)),
        plan_ms_mean=float(plan_ms.mean()) if plan_ms.size else 0.0,
        plan_ms_p95=float(np.percentile(plan_ms, 95)) if plan_ms.size else 0.0,
        saturation_fraction=float((u.max(axis=1) >= 0.99).mean()),
        completed=True)


# --- controller factory -------------------------------------------------------


@dataclass
class ControllerSpecs:
    """Everything needed to build controllers for a benchmark cell."""

    cost: CostConfig = field(default_factory=CostConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    cycles_per_tick: int = 2


def build_controller(name: str, specs: ControllerSpecs, seed: int):
    model = PlantParams()  # planners always use the nominal model
    if name == "mpc":
        return MpcAgent(model, specs.cost, specs.planner, seed=seed,
                        cycles_per_tick=specs.cycles_per_tick)
    if name == "pid":
        return PidController(model, specs.pid)
    raise ValueError(f"unknown controller {name!r}")


# --- benchmark ----------------------------------------------------------------


@dataclass
class CellResult:
    controller: str
    profile: str
    metrics: MetricsSummary | None
    error: str | None = None
    logs: list[EpisodeLog] = field(default_factory=list)


@dataclass
class BenchmarkResult:
    cells: dict[tuple[str, str], CellResult]
    significance: dict[tuple[str, str], dict]
    config_hash: str

    def table_text(self) -> str:
        """Formatted text table: methods x profiles x {Pos, Ang}."""
        profiles = sorted({k[1] for k in self.cells},
                          key=lambda p: PROFILES.index(p))
        controllers = sorted({k[0] for k in self.cells})
        lines = []
        hdr = f"{'Method':<8}" + "".join(
            f"{p + ' Pos(m)':>16}{p + ' Ang(deg)':>16}" for p in profiles)
        lines.append(hdr)
        lines.append("-" * len(hdr))
        for c in controllers:
            row = f"{c:<8}"
            for p in profiles:
                cell = self.cells.get((c, p))
                if cell is None or cell.metrics is None:
                    row += f"{'failed':>16}{'failed':>16}"
                    continue
                m = cell.metrics
                sig = self.significance.get((c, p), {})
                star_p = "*" if sig.get("pos_significant") else " "
                star_a = "*" if sig.get("tilt_significant") else " "
                row += (f"{m.pos_median:>10.3f} ({m.pos_iqr:.2f}){star_p}"
                        f"{m.tilt_median:>10.2f} ({m.tilt_iqr:.2f}){star_a}")
            lines.append(row)
        lines.append("(* = significantly lowest, Mann-Whitney U p<0.05)")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "cells": {
                f"{c}/{p}": (cell.metrics.as_dict() if cell.metrics else
                             {"error": cell.error})
                for (c, p), cell in self.cells.items()
            },
            "significance": {f"{c}/{p}": v
                             for (c, p), v in self.significance.items()},
        }


def run_cell(controller_name: str, scenario: Scenario, specs: ControllerSpecs,
             keep_logs: bool = False) -> CellResult:
    """All replications of one (controller, profile) cell."""
    pos_all, tilt_all = [], []
    logs = []
    metrics = None
    try:
        summaries = []
        for seed in scenario.seeds:
            controller = build_controller(controller_name, specs, seed)
            log = run_episode(scenario, controller, scenario.duration, seed)
            log.config_hash = config_hash((specs, scenario))
            m = compute_metrics(log, scenario)
            summaries.append(m)
            pos_all.append(m.pos_errors)
            tilt_all.append(m.tilt_errors)
            if keep_logs:
                logs.append(log)
        pos = np.concatenate(pos_all)
        ang = np.concatenate(tilt_all)
        metrics = MetricsSummary(
            pos_errors=pos, tilt_errors=ang,
            pos_median=float(np.median(pos)),
            pos_iqr=float(np.percentile(pos, 75) - np.percentile(pos, 25)),
            tilt_median=float(np.median(ang)),
            tilt_iqr=float(np.percentile(ang, 75) - np.percentile(ang, 25)),
            plan_ms_mean=float(np.mean([s.plan_ms_mean for s in summaries])),
            plan_ms_p95=float(np.max([s.plan_ms_p95 for s in summaries])),
            saturation_fraction=float(np.mean(
                [s.saturation_fraction for s in summaries])),
            completed=True)
    except (IncompleteLogError, Exception) as exc:  # cell marked failed
        if metrics is None and not pos_all:
            return CellResult(controller_name, scenario.profile_kind, None,
                              error=f"{type(exc).__name__}: {exc}", logs=logs)
        raise
    return CellResult(controller_name, scenario.profile_kind, metrics,
                      logs=logs)


def run_benchmark(profiles=PROFILES, controllers=("mpc", "pid"),
                  seeds=(0,), n_switches: int = 10,
                  specs: ControllerSpecs | None = None,
                  plant_variant: str = "nominal",
                  noise: NoiseConfig | None = None,
                  keep_logs: bool = False,
                  alpha: float = 0.05,
                  progress=None) -> BenchmarkResult:
    """Full results table with per-cell Mann-Whitney significance flags."""
    specs = specs or ControllerSpecs()
    noise = noise or NoiseConfig()
    cells: dict[tuple[str, str], CellResult] = {}
    for profile in profiles:
        scenario = Scenario(profile_kind=profile, seeds=tuple(seeds),
                            n_switches=n_switches,
                            plant_variant=plant_variant, noise=noise)
        for ctrl in controllers:
            t0 = time.perf_counter()
            cells[(ctrl, profile)] = run_cell(ctrl, scenario, specs, keep_logs)
            if progress is not None:
                progress(f"{ctrl}/{profile}: "
                         f"{time.perf_counter() - t0:.1f}s")
    significance: dict[tuple[str, str], dict] = {}
    for profile in profiles:
        ok = [c for c in controllers
              if cells[(c, profile)].metrics is not None]
        for c in ok:
            m = cells[(c, profile)].metrics
            entry = {"pos_significant": False, "tilt_significant": False,
                     "pos_p": None, "tilt_p": None}
            others = [o for o in ok if o != c]
            if others and len(m.pos_errors) > 1:
                pos_ps, tilt_ps = [], []
                for o in others:
                    mo = cells[(o, profile)].metrics
                    pos_ps.append(_mwu_p(m.pos_errors, mo.pos_errors))
                    tilt_ps.append(_mwu_p(m.tilt_errors, mo.tilt_errors))
                entry["pos_p"] = max(pos_ps)
                entry["tilt_p"] = max(tilt_ps)
                entry["pos_significant"] = bool(
                    entry["pos_p"] < alpha and all(
                        m.pos_median <= cells[(o, profile)].metrics.pos_median
                        for o in others))
                entry["tilt_significant"] = bool(
                    entry["tilt_p"] < alpha and all(
                        m.tilt_median <= cells[(o, profile)].metrics.tilt_median
                        for o in others))
            significance[(c, profile)] = entry
    return BenchmarkResult(cells, significance,
                           config_hash=config_hash((specs, list(profiles),
                                                    list(seeds), n_switches,
                                                    plant_variant)))


def _mwu_p(a: np.ndarray, b: np.ndarray) -> float:
    if np.all(a == a[0]) and np.all(b == b[0]) and a[0] == b[0]:
        return 1.0
    return float(stats.mannwhitneyu(a, b, alternative="two-sided").pvalue)


# --- iteration ablation ---------------------------------------------------------


@dataclass
class AblationResult:
    iterations: np.ndarray
    mean_return: np.ndarray         # open loop, mean over seeds
    mean_plan_ms: np.ndarray
    closed_loop_iterations: np.ndarray
    closed_loop_pos_error: np.ndarray

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations.tolist(),
            "mean_return": self.mean_return.tolist(),
            "mean_plan_ms": self.mean_plan_ms.tolist(),
            "closed_loop_iterations": self.closed_loop_iterations.tolist(),
            "closed_loop_pos_error": self.closed_loop_pos_error.tolist(),
        }


def _openloop_setting(seed: int, profile: BaseMotionProfile,
                      specs: ControllerSpecs):
    """Representative planning problem: fresh 1 m switch on a moving base."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 31)))
    t0 = float(rng.uniform(0.0, profile.period)) if profile.period > 0 else 0.0
    model = PlantParams()
    b0 = base_pose(profile, t0)
    start_w = transform_point(b0, np.asarray(DEFAULT_TARGETS[0]))
    joints = inverse_target_joints(start_w, b0, model)
    from .params import base_velocity
    x0 = hanging_state(model, joints, b0, base_velocity(profile, t0), time=t0)
    steps = specs.planner.horizon_steps
    poses = np.stack([base_pose(profile, t0 + k * specs.planner.model_dt)
                      for k in range(steps + 1)])
    target_w_local = np.asarray(DEFAULT_TARGETS[1])
    return x0, poses, target_w_local, t0


def run_iteration_ablation(iteration_grid=None, n_seeds: int = 50,
                           closed_loop_iters=(1, 5),
                           closed_loop_seeds=(0, 1, 2),
                           closed_loop_duration: float = 60.0,
                           specs: ControllerSpecs | None = None,
                           profile_kind: str = "medium",
                           progress=None) -> AblationResult:
    """Open-loop return/time vs CEM iterations + closed-loop error check."""
    specs = specs or ControllerSpecs()
    if iteration_grid is None:
        iteration_grid = list(range(1, 101))
    profile = BaseMotionProfile.named(profile_kind)
    returns = np.zeros(len(iteration_grid))
    times = np.zeros(len(iteration_grid))
    for i, iters in enumerate(iteration_grid):
        cfg = PlannerConfig(
            horizon=specs.planner.horizon, model_dt=specs.planner.model_dt,
            iterations_per_cycle=int(iters),
            sample_size=specs.planner.sample_size,
            elite_count=specs.planner.elite_count,
            noise_sigma=specs.planner.noise_sigma, knots=specs.planner.knots,
            sigma_floor=specs.planner.sigma_floor,
            refit_sigma=specs.planner.refit_sigma,
            parallel_rollouts=specs.planner.parallel_rollouts)
        planner = CranePlanner(PlantParams(), specs.cost, cfg)
        rets, ms = [], []
        for seed in range(n_seeds):
            x0, poses, target, t0 = _openloop_setting(seed, profile, specs)
            pol, diag = planner.plan_cycle(x0, poses, target, t0,
                                           np.random.SeedSequence((seed, 7)))
            rets.append(diag.nominal_costs[-1])
            ms.append(diag.planning_time_ms)
        returns[i] = np.mean(rets)
        times[i] = np.mean(ms)
        if progress is not None:
            progress(f"open-loop iters={iters}: return={returns[i]:.0f} "
                     f"time={times[i]:.1f}ms")
    # closed loop: station keeping over a single target
    cl_err = np.zeros(len(closed_loop_iters))
    for i, iters in enumerate(closed_loop_iters):
        errs = []
        for seed in closed_loop_seeds:
            cfg = PlannerConfig(iterations_per_cycle=int(iters))
            sc = Scenario(profile_kind=profile_kind,
                          targets_local=(DEFAULT_TARGETS[0], DEFAULT_TARGETS[0]),
                          switch_interval=closed_loop_duration, n_switches=1,
                          seeds=(seed,))
            agent = MpcAgent(PlantParams(), specs.cost, cfg, seed=seed,
                             cycles_per_tick=specs.cycles_per_tick)
            log = run_episode(sc, agent, closed_loop_duration, seed)
            perr = np.hypot(log.col("payload_x") - log.col("target_x"),
                            log.col("payload_y") - log.col("target_y"))
            errs.append(float(perr.mean()))
        cl_err[i] = np.mean(errs)
        if progress is not None:
            progress(f"closed-loop iters={iters}: mean err={cl_err[i]:.3f} m")
    return AblationResult(np.asarray(iteration_grid, dtype=float), returns,
                          times, np.asarray(closed_loop_iters, dtype=float),
                          cl_err)


# --- offline PID gain search ----------------------------------------------------


def tune_pid_grid(profile_kind: str = "slow", seeds=(0, 1, 2, 3, 4),
                  n_switches: int = 4, progress=None) -> tuple[PidConfig, float]:
    """Grid search for PID gains minimizing mean position error.

    This is the documented source of the shipped PidConfig defaults
    (profile "slow", 5 seeds x 4 switches, non-negative gains, luff joint
    kp fixed at 1.6x the slew kp).  It is slow and not run in tests.
    """
    from .control import PidAxisGains
    best = (None, np.inf)
    for kp_j, kd_j in ((2.5, 0.3), (4.0, 0.5), (6.0, 0.8)):
        for kp_s in (0.0, 0.5, 1.0, 2.0, 3.0):
            for ki_s in (0.0, 0.2):
                for kd_s in (0.0, 0.3, 1.0):
                    cfg = PidConfig(
                        joint=(PidAxisGains(kp=kp_j, kd=kd_j),
                               PidAxisGains(kp=1.6 * kp_j, kd=kd_j),
                               PidAxisGains(kp=kp_j, kd=kd_j)),
                        sway=(PidAxisGains(kp=kp_s, ki=ki_s, kd=kd_s),
                              PidAxisGains(kp=kp_s, ki=ki_s, kd=kd_s),
                              PidAxisGains()))
                    scores = []
                    for seed in seeds:
                        sc = Scenario(profile_kind=profile_kind, seeds=(seed,),
                                      n_switches=n_switches)
                        ctrl = PidController(PlantParams(), cfg)
                        try:
                            log = run_episode(sc, ctrl, sc.duration, seed)
                            m = compute_metrics(log, sc)
                            scores.append(float(np.mean(m.pos_errors)))
                        except Exception:
                            scores = []
                            break
                    if not scores:
                        continue
                    score = float(np.mean(scores))
                    if progress is not None:
                        progress(f"kp_j={kp_j} kp_s={kp_s} ki_s={ki_s} "
                                 f"kd_s={kd_s}: err={score:.4f}")
                    if score < best[1]:
                        best = (cfg, score)
    return best
