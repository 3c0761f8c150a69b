"""Cross-entropy-method receding-horizon planner over spline-knot commands.

Each planning cycle samples batches of zero-order-hold command trajectories
from a diagonal Gaussian, scores them by forward rollout of the crane model
under a prescribed base-pose forecast, refits the distribution on the elite
set, and returns the best policy seen in the cycle.  Costs are evaluated by
the jit rollout kernels; everything is deterministic for a fixed seed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .costs import CostConfig
from .params import PlantParams, pack_params
from .state import GeneralizedState


class InsufficientForecastError(ValueError):
    """Forecast shorter than the rollout horizon."""


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 0.8
    model_dt: float = 0.01
    iterations_per_cycle: int = 5
    sample_size: int = 20
    elite_count: int = 5
    noise_sigma: float = 0.2
    knots: int = 3
    sigma_floor: float = 0.05         # keeps the refit variance from collapsing
    refit_sigma: bool = True          # False: hold sampling noise fixed
    parallel_rollouts: bool = False

    def __post_init__(self):
        if self.elite_count > self.sample_size:
            raise ValueError("elite_count must not exceed sample_size")
        if self.knots < 1:
            raise ValueError("need at least one spline knot")

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon / self.model_dt))


@dataclass
class SplinePolicy:
    """Zero-order-hold command trajectory over K knots."""

    knot_times: np.ndarray      # (K,), strictly ascending
    knot_values: np.ndarray     # (K, 3), normalized commands in [-1, 1]

    def action_at(self, t: float) -> np.ndarray:
        """Active knot value at time t (held before the first / after the last)."""
        idx = int(np.searchsorted(self.knot_times, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.knot_times) - 1)
        return self.knot_values[idx].copy()

    def shifted(self, new_times: np.ndarray) -> "SplinePolicy":
        """Re-sample this policy on a new knot grid (warm start)."""
        vals = np.stack([self.action_at(t) for t in new_times])
        return SplinePolicy(np.asarray(new_times, dtype=float).copy(), vals)

    @classmethod
    def zeros(cls, knot_times: np.ndarray) -> "SplinePolicy":
        kt = np.asarray(knot_times, dtype=float)
        return cls(kt.copy(), np.zeros((len(kt), 3)))


def action_at(policy: SplinePolicy, t: float) -> np.ndarray:
    return policy.action_at(t)


@dataclass
class SamplingDistribution:
    """Diagonal Gaussian over the knot-value matrix."""

    mean: np.ndarray           # (K, 3)
    var: np.ndarray            # (K, 3) diagonal entries

    @classmethod
    def around(cls, mean: np.ndarray, sigma: float) -> "SamplingDistribution":
        mean = np.asarray(mean, dtype=float)
        return cls(mean.copy(), np.full_like(mean, sigma * sigma))


def sample_candidates(dist: SamplingDistribution, n: int,
                      rng: np.random.Generator | int) -> np.ndarray:
    """n candidate knot matrices; index 0 is always the unperturbed mean."""
    if n < 1:
        raise ValueError("need at least one candidate")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    draws = dist.mean + np.sqrt(dist.var) * rng.standard_normal((n,) + dist.mean.shape)
    draws[0] = dist.mean
    np.clip(draws, -1.0, 1.0, out=draws)
    return draws


def plan_iteration(dist: SamplingDistribution, evaluate, cfg: PlannerConfig,
                   rng: np.random.Generator | int
                   ) -> tuple[SamplingDistribution, np.ndarray, float]:
    """One sample/evaluate/refit round.

    Returns the refit distribution, the best candidate's knot matrix and its
    cost.  Ties break toward the lower candidate index (stable sort).
    """
    cands = sample_candidates(dist, cfg.sample_size, rng)
    costs = np.asarray(evaluate(cands), dtype=float)
    order = np.argsort(costs, kind="stable")
    elites = cands[order[:cfg.elite_count]]
    mean = elites.mean(axis=0)
    if cfg.refit_sigma:
        var = np.maximum(elites.var(axis=0), cfg.sigma_floor**2)
    else:
        var = np.full_like(mean, cfg.noise_sigma**2)
    best = int(order[0])
    return SamplingDistribution(mean, var), cands[best].copy(), float(costs[best])


@dataclass
class CycleDiagnostics:
    """Per-cycle planner telemetry."""

    nominal_costs: list[float] = field(default_factory=list)  # best-so-far per iteration
    planning_time_ms: float = 0.0
    n_rollouts: int = 0


@dataclass
class RolloutResult:
    total_cost: float
    states: np.ndarray          # (steps+1, 2n) stacked [q, qd]
    breakdowns: np.ndarray      # (steps+1, 8) residuals/blends/total per step


class CranePlanner:
    """Binds the crane model, cost and CEM configuration together."""

    def __init__(self, model: PlantParams, cost: CostConfig,
                 cfg: PlannerConfig | None = None):
        self.model = model
        self.cost = cost
        self.cfg = cfg or PlannerConfig()
        self._par, self._seg, self._locked = pack_params(model)
        self._cp = cost.packed()

    # -- rollout plumbing ----------------------------------------------------

    def _check_forecast(self, forecast_poses: np.ndarray) -> np.ndarray:
        poses = np.ascontiguousarray(forecast_poses, dtype=float)
        if poses.shape[0] < self.cfg.horizon_steps + 1:
            raise InsufficientForecastError(
                f"forecast has {poses.shape[0]} poses, need "
                f"{self.cfg.horizon_steps + 1}")
        return poses

    def _targets_world(self, poses: np.ndarray, target_local: np.ndarray
                       ) -> np.ndarray:
        steps = self.cfg.horizon_steps
        out = np.empty((steps + 1, 3))
        tl = np.asarray(target_local, dtype=float)
        for s in range(steps + 1):
            kernels._transform_point_into(poses[s], tl[0], tl[1], tl[2], out[s])
        return out

    def evaluator(self, x0: GeneralizedState, forecast_poses: np.ndarray,
                  target_local: np.ndarray):
        """Batch objective: candidate knot matrices -> rollout costs."""
        poses = self._check_forecast(forecast_poses)
        targets = self._targets_world(poses, target_local)
        q0 = np.ascontiguousarray(x0.positions())
        qd0 = np.ascontiguousarray(x0.qdot, dtype=float)
        steps = self.cfg.horizon_steps
        dt = self.cfg.model_dt
        kernel = (kernels.rollout_batch_parallel if self.cfg.parallel_rollouts
                  else kernels.rollout_batch_serial)

        def evaluate(candidates: np.ndarray) -> np.ndarray:
            cands = np.ascontiguousarray(candidates, dtype=float)
            costs = np.empty(cands.shape[0])
            kernel(q0, qd0, cands, poses, targets, steps, dt, self._par,
                   self._seg, self._locked, self._cp, costs)
            return costs

        return evaluate

    def rollout(self, policy: SplinePolicy, x0: GeneralizedState,
                forecast_poses: np.ndarray, target_local: np.ndarray
                ) -> RolloutResult:
        """Single-candidate rollout recording the trajectory and cost terms."""
        poses = self._check_forecast(forecast_poses)
        targets = self._targets_world(poses, target_local)
        steps = self.cfg.horizon_steps
        dt = self.cfg.model_dt
        K = policy.knot_values.shape[0]
        q = np.ascontiguousarray(x0.positions())
        qd = np.ascontiguousarray(x0.qdot, dtype=float)
        ws = kernels.make_step_workspace(self._seg.shape[0])
        tip = np.empty(3); vtip = np.empty(3); com = np.empty(3); vcom = np.empty(3)
        states = np.empty((steps + 1, 2 * q.shape[0]))
        breakdowns = np.empty((steps + 1, 8))
        total = 0.0
        for s in range(steps):
            kidx = min(K - 1, (s * K) // steps) if steps > 0 else 0
            u = np.clip(policy.knot_values[kidx], -1.0, 1.0)
            vp = (targets[s + 1] - targets[s]) / dt
            terms = kernels._state_cost(q, qd, self._par, self._seg, self._cp,
                                        targets[s], vp[0], vp[1], vp[2],
                                        u[0], u[1], tip, vtip, com, vcom)
            states[s] = np.concatenate([q, qd])
            breakdowns[s] = terms
            total += terms[7]
            ok = kernels.step_arrays(q, qd, u, poses[s + 1], dt, self._par,
                                     self._seg, self._locked, ws)
            if not ok:
                raise RuntimeError("degenerate configuration during rollout")
        if steps >= 1:
            vp = (targets[steps] - targets[steps - 1]) / dt
        else:
            vp = np.zeros(3)
        terms = kernels._state_cost(q, qd, self._par, self._seg, self._cp,
                                    targets[steps], vp[0], vp[1], vp[2],
                                    0.0, 0.0, tip, vtip, com, vcom)
        states[steps] = np.concatenate([q, qd])
        breakdowns[steps] = terms
        total += terms[7]
        return RolloutResult(total, states, breakdowns)

    # -- planning ------------------------------------------------------------

    def knot_times(self, t0: float) -> np.ndarray:
        K = self.cfg.knots
        return t0 + np.arange(K) * (self.cfg.horizon / K)

    def plan_cycle(self, x0: GeneralizedState, forecast_poses: np.ndarray,
                   target_local: np.ndarray, t0: float,
                   seed: int | np.random.SeedSequence | np.random.Generator,
                   prev_policy: SplinePolicy | None = None
                   ) -> tuple[SplinePolicy, CycleDiagnostics]:
        """Run the configured number of CEM iterations from a warm start.

        The previous nominal policy is time-shifted onto the new knot grid
        and used as the initial mean; the best candidate across all
        iterations (the mean is re-injected unperturbed in every batch)
        becomes the new nominal policy.
        """
        rng = (seed if isinstance(seed, np.random.Generator)
               else np.random.default_rng(seed))
        t_start = time.perf_counter()
        times = self.knot_times(t0)
        if prev_policy is not None:
            mean = np.clip(prev_policy.shifted(times).knot_values, -1.0, 1.0)
        else:
            mean = np.zeros((self.cfg.knots, 3))
        dist = SamplingDistribution.around(mean, self.cfg.noise_sigma)
        evaluate = self.evaluator(x0, forecast_poses, target_local)
        diag = CycleDiagnostics()
        best_vals: np.ndarray | None = None
        best_cost = np.inf
        for _ in range(self.cfg.iterations_per_cycle):
            dist, vals, cost = plan_iteration(dist, evaluate, self.cfg, rng)
            if cost < best_cost:
                best_cost = cost
                best_vals = vals
            diag.nominal_costs.append(best_cost)
            diag.n_rollouts += self.cfg.sample_size
        diag.planning_time_ms = (time.perf_counter() - t_start) * 1e3
        assert best_vals is not None
        return SplinePolicy(times, best_vals), diag
