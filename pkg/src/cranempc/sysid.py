"""Dynamics oracle suite: independent physical checks of the forward model.

Each check returns (ok, detail).  The CLI `sysid-check` prints them; the
test suite asserts them.  All oracles are independent of the integrator
path they validate (analytic formulas, finite differences, energy bookkeeping).
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .dynamics import boom_tip_pose, hanging_state, step
from .params import PlantParams, SegmentParams, pack_params


def check_equilibrium() -> tuple[bool, str]:
    """Hanging chain under a static base is a machine-precision fixed point."""
    params = PlantParams()
    st = hanging_state(params, q_crane=[0.2, 0.4, 1.0])
    nxt = step(st, np.zeros(3), np.zeros(6), params, dt=0.01)
    drift = float(np.max(np.abs(nxt.as_vector() - st.as_vector())))
    return drift == 0.0, f"state drift {drift:.2e}"


def undamped_params(**kwargs) -> PlantParams:
    """Nominal chain with all pendulum dissipation removed (oracle use)."""
    crane = PlantParams().crane
    seg = SegmentParams(mass=crane.payload_mass, length=crane.payload_length,
                        radius=crane.payload_radius,
                        attach_offset=crane.hook_offset, hinge_damping=0.0)
    return PlantParams(segments=(seg,), cable_hinge_damping=0.0, **kwargs)


def energy_drift(deflections_deg=(20.0,), duration: float = 10.0,
                 dt: float = 1e-3, cable: float = 1.0,
                 seed: int | None = None, max_deg: float = 30.0,
                 n_random: int = 0) -> float:
    """Worst relative energy drift over undamped fixed-pivot rollouts."""
    params = undamped_params()
    _, seg, _ = pack_params(params)
    cases = []
    for d in deflections_deg:
        cases.append((math.radians(d), 0.0, math.radians(d), 0.0, cable))
    if n_random:
        rng = np.random.default_rng(seed)
        for _ in range(n_random):
            ang = math.radians(rng.uniform(0.0, max_deg))
            az = rng.uniform(0.0, 2.0 * math.pi)
            a0 = math.atan2(math.sin(ang) * math.sin(az), math.cos(ang))
            b0 = math.asin(math.sin(ang) * math.cos(az))
            ang2 = math.radians(rng.uniform(0.0, max_deg))
            az2 = rng.uniform(0.0, 2.0 * math.pi)
            a1 = math.atan2(math.sin(ang2) * math.sin(az2), math.cos(ang2))
            b1 = math.asin(math.sin(ang2) * math.cos(az2))
            cases.append((a0, b0, a1, b1, rng.uniform(0.5, 1.8)))
    worst = 0.0
    chunks = 100
    steps_per_chunk = int(round(duration / dt)) // chunks
    for a0, b0, a1, b1, l in cases:
        qp = np.array([a0, b0, a1, b1])
        qpd = np.zeros(4)
        e0 = kernels._total_energy(qp, qpd, l, 0.0, 0.0, 0.0, 0.0,
                                   params.crane.gravity, seg)
        for _ in range(chunks):
            kernels._integrate_pendulum(qp, qpd, l, params.crane.gravity, seg,
                                        0, dt, steps_per_chunk)
            e = kernels._total_energy(qp, qpd, l, 0.0, 0.0, 0.0, 0.0,
                                      params.crane.gravity, seg)
            worst = max(worst, abs(e - e0) / abs(e0))
    return worst


def check_energy() -> tuple[bool, str]:
    worst = energy_drift(deflections_deg=(20.0,), n_random=4, seed=0)
    return worst < 1e-3, f"max |dE/E| = {worst:.2e} (< 1e-3)"


def measured_period(cable: float, dt: float = 1e-4,
                    amplitude_deg: float = 1.0) -> float:
    """Oscillation period of the locked-hook point-mass reduction."""
    params = PlantParams(
        segments=(SegmentParams(mass=0.317, length=0.0, radius=0.0,
                                hinge_damping=0.0),),
        hook_locked=True, cable_hinge_damping=0.0)
    _, seg, locked = pack_params(params)
    qp = np.array([math.radians(amplitude_deg), 0.0, 0.0, 0.0])
    qpd = np.zeros(4)
    crossings = []
    prev = qp[0]
    t = 0.0
    horizon = 6.0 * 2.0 * math.pi * math.sqrt(cable / params.crane.gravity)
    while t < horizon:
        kernels._integrate_pendulum(qp, qpd, cable, params.crane.gravity, seg,
                                    locked, dt, 1)
        t += dt
        if prev > 0.0 and qp[0] <= 0.0:
            crossings.append(t - dt + dt * prev / (prev - qp[0]))
        prev = qp[0]
    return float(np.mean(np.diff(crossings)))


def check_period() -> tuple[bool, str]:
    details = []
    ok = True
    for cable in (0.5, 1.0, 1.5):
        T = measured_period(cable)
        T_exact = 2.0 * math.pi * math.sqrt(cable / 9.81)
        rel = abs(T - T_exact) / T_exact
        ok &= rel < 0.01
        details.append(f"l={cable}: {rel * 100:.3f}%")
    return ok, "period err " + ", ".join(details) + " (< 1%)"


def jacobian_error(seed: int = 0, n_trials: int = 5,
                   eps: float = 1e-5) -> float:
    """Max abs difference between analytic and central-difference Jacobian."""
    params = PlantParams()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        qb = rng.normal(0.0, 0.3, 6)
        qc = np.array([rng.uniform(-1.4, 1.4), rng.uniform(0.0, 0.9),
                       rng.uniform(0.1, 1.9)])
        _, jac = boom_tip_pose(qb, qc, params)
        x = np.concatenate([qb, qc])
        for i in range(9):
            xp = x.copy(); xp[i] += eps
            xm = x.copy(); xm[i] -= eps
            pp, _ = boom_tip_pose(xp[:6], xp[6:], params)
            pm, _ = boom_tip_pose(xm[:6], xm[6:], params)
            fd = (pp - pm) / (2.0 * eps)
            worst = max(worst, float(np.max(np.abs(fd - jac[:, i]))))
    return worst


def check_jacobian() -> tuple[bool, str]:
    worst = jacobian_error()
    return worst < 1e-6, f"max |J - FD| = {worst:.2e} (< 1e-6)"


def check_joint_clamping() -> tuple[bool, str]:
    """Extreme commands never push joints outside their ranges."""
    params = PlantParams()
    ranges = params.crane.joint_ranges()
    st = hanging_state(params, q_crane=[1.2, 0.9, 1.8])
    rng = np.random.default_rng(1)
    worst = 0.0
    for k in range(2000):
        u = rng.choice([-1.0, 1.0], size=3)
        st = step(st, u, np.zeros(6), params, dt=0.01)
        for j in range(3):
            worst = max(worst,
                        float(ranges[j, 0] - st.q_crane[j]),
                        float(st.q_crane[j] - ranges[j, 1]))
    return worst <= 0.0, f"max range violation {worst:.2e} m/rad"


def check_actuator_response() -> tuple[bool, str]:
    """Slew reaches 95% of steady state in about 3 armature/gain constants."""
    params = PlantParams()
    act = params.actuators[0]
    v = 0.0
    dt = 1e-3
    t95 = None
    target = 0.5 * act.cmd_scale
    for k in range(2000):
        v = kernels._actuator_vel(v, 0.5, act.kv, act.cmd_scale, act.armature,
                                  act.damping, act.friction_loss, dt)
        if t95 is None and v >= 0.95 * target:
            t95 = (k + 1) * dt
            break
    expected = 3.0 * act.armature / act.kv
    ok = t95 is not None and abs(t95 - expected) / expected < 0.05
    return ok, f"t95 = {t95:.3f}s vs ~{expected:.3f}s"


def run_all() -> list[tuple[str, bool, str]]:
    checks = [
        ("equilibrium fixed point", check_equilibrium),
        ("energy conservation", check_energy),
        ("analytic pendulum period", check_period),
        ("boom-tip jacobian", check_jacobian),
        ("joint range clamping", check_joint_clamping),
        ("actuator step response", check_actuator_response),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
