"""Command line interface: simulate, benchmark, ablation, checks, plot data.

Exit codes: 0 success, 1 runtime failure (one machine-parsable ERROR line on
stderr), 2 usage errors (argparse).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cranempc",
        description="Sampling-based MPC crane control: simulation benchmark")
    sub = p.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop episode")
    sim.add_argument("--scenario", default="static",
                     choices=["static", "slow", "medium", "fast"],
                     help="platform motion profile")
    sim.add_argument("--controller", default="mpc", choices=["mpc", "pid"])
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--switches", type=int, default=10)
    sim.add_argument("--no-noise", action="store_true")
    sim.add_argument("--secondary-payload", action="store_true",
                     help="attach the unmodeled secondary payload to the plant")
    sim.add_argument("--cycles-per-tick", type=int, default=2)
    sim.add_argument("--out", default="out", help="output directory")

    bench = sub.add_parser("benchmark", help="full results table")
    bench.add_argument("--controllers", default="mpc,pid")
    bench.add_argument("--profiles", default="static,slow,medium,fast")
    bench.add_argument("--seeds", default="0")
    bench.add_argument("--switches", type=int, default=10)
    bench.add_argument("--secondary-payload", action="store_true")
    bench.add_argument("--out", default="out")

    abl = sub.add_parser("ablation", help="planner iteration sweep")
    abl.add_argument("--iterations", default="1:100",
                     help="grid as lo:hi[:step] or comma list")
    abl.add_argument("--seeds", type=int, default=50,
                     help="open-loop replications per setting")
    abl.add_argument("--closed-loop-iters", default="1,5")
    abl.add_argument("--out", default="out")

    sub.add_parser("sysid-check", help="run the dynamics oracle suite")

    pl = sub.add_parser("plot-data", help="reduce logs to plot-ready CSV")
    pl.add_argument("--logs", nargs="+", required=True,
                    help="episode CSVs (switch-aligned bands) or ablation JSON")
    pl.add_argument("--out", default="out")

    kb = sub.add_parser("kernel-bench",
                        help="compare jit kernels against the pure-numpy path")
    kb.add_argument("--cycles", type=int, default=20)
    kb.add_argument("--_inner", action="store_true", help=argparse.SUPPRESS)
    return p


def _scenario_from_args(args):
    from .control import NoiseConfig
    from .harness import Scenario
    return Scenario(
        profile_kind=args.scenario if hasattr(args, "scenario") else "static",
        seeds=(args.seed,), n_switches=args.switches,
        plant_variant="secondary" if args.secondary_payload else "nominal",
        noise=NoiseConfig(enabled=not args.no_noise))


def cmd_simulate(args) -> int:
    from .configio import config_hash
    from .control import run_episode
    from .harness import ControllerSpecs, build_controller, compute_metrics
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = _scenario_from_args(args)
    specs = ControllerSpecs(cycles_per_tick=args.cycles_per_tick)
    controller = build_controller(args.controller, specs, args.seed)
    t0 = time.perf_counter()
    log = run_episode(scenario, controller, scenario.duration, args.seed)
    wall = time.perf_counter() - t0
    log.config_hash = config_hash((specs, scenario))
    stem = f"episode_{args.controller}_{args.scenario}_seed{args.seed}"
    log.save_csv(out / f"{stem}.csv")
    summary = {
        "controller": args.controller, "profile": args.scenario,
        "seed": args.seed, "config_hash": log.config_hash,
        "wall_time_s": wall, "failure": log.failure,
        "failure_time": log.failure_time,
    }
    if log.failure is None:
        summary["metrics"] = compute_metrics(log, scenario).as_dict()
    (out / f"{stem}.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {out / (stem + '.csv')} and summary json "
          f"({wall:.1f}s wall)")
    if log.failure is not None:
        print(f"ERROR: episode failed at t={log.failure_time}: {log.failure}",
              file=sys.stderr)
        return 1
    return 0


def cmd_benchmark(args) -> int:
    from .control import NoiseConfig
    from .harness import ControllerSpecs, run_benchmark
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_benchmark(
        profiles=tuple(args.profiles.split(",")),
        controllers=tuple(args.controllers.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        n_switches=args.switches,
        specs=ControllerSpecs(),
        plant_variant="secondary" if args.secondary_payload else "nominal",
        noise=NoiseConfig(),
        progress=lambda msg: print(f"  [{msg}]", flush=True))
    text = result.table_text()
    print(text)
    (out / "benchmark.json").write_text(json.dumps(result.as_dict(), indent=2))
    (out / "benchmark.txt").write_text(text + "\n")
    failed = [k for k, c in result.cells.items() if c.metrics is None]
    if failed:
        print(f"ERROR: failed cells: {failed}", file=sys.stderr)
        return 1
    return 0


def _parse_grid(spec: str) -> list[int]:
    if ":" in spec:
        parts = [int(x) for x in spec.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(lo, hi + 1, step))
    return [int(x) for x in spec.split(",")]


def cmd_ablation(args) -> int:
    from .harness import run_iteration_ablation
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_iteration_ablation(
        iteration_grid=_parse_grid(args.iterations),
        n_seeds=args.seeds,
        closed_loop_iters=tuple(_parse_grid(args.closed_loop_iters)),
        progress=lambda msg: print(f"  [{msg}]", flush=True))
    (out / "ablation.json").write_text(json.dumps(result.as_dict(), indent=2))
    arr = np.column_stack([result.iterations, result.mean_return,
                           result.mean_plan_ms])
    np.savetxt(out / "ablation_openloop.csv", arr, delimiter=",",
               header="iterations,mean_return,mean_plan_ms", comments="")
    print(f"wrote {out / 'ablation.json'}")
    return 0


def cmd_sysid_check(args) -> int:
    from . import sysid
    results = sysid.run_all()
    worst_fail = False
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        worst_fail |= not ok
    if worst_fail:
        print("ERROR: sysid oracle failures", file=sys.stderr)
        return 1
    return 0


def cmd_plot_data(args) -> int:
    from .control import EpisodeLog
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.logs:
        path = Path(path)
        if path.suffix == ".json":
            d = json.loads(path.read_text())
            if "iterations" in d:
                arr = np.column_stack([d["iterations"], d["mean_return"],
                                       d["mean_plan_ms"]])
                np.savetxt(out / f"{path.stem}_return_vs_iters.csv", arr,
                           delimiter=",",
                           header="iterations,mean_return,mean_plan_ms",
                           comments="")
                continue
            print(f"ERROR: {path} is not an ablation result", file=sys.stderr)
            return 1
        log = EpisodeLog.load_csv(path)
        t = log.col("time")
        perr = np.hypot(log.col("payload_x") - log.col("target_x"),
                        log.col("payload_y") - log.col("target_y"))
        tilt = log.col("tilt_deg")
        interval = log.switch_interval
        grid = np.arange(0.0, interval, 0.01)
        pos_rows, tilt_rows = [], []
        for ts in log.switch_times:
            sel = (t >= ts) & (t < ts + interval)
            if sel.sum() < len(grid):
                continue
            pos_rows.append(perr[sel][:len(grid)])
            tilt_rows.append(tilt[sel][:len(grid)])
        if not pos_rows:
            print(f"ERROR: {path}: no complete switch windows", file=sys.stderr)
            return 1
        pos = np.stack(pos_rows)
        tlt = np.stack(tilt_rows)
        arr = np.column_stack([
            grid,
            np.median(pos, axis=0), np.percentile(pos, 25, axis=0),
            np.percentile(pos, 75, axis=0),
            np.median(tlt, axis=0), np.percentile(tlt, 25, axis=0),
            np.percentile(tlt, 75, axis=0)])
        np.savetxt(out / f"{path.stem}_bands.csv", arr, delimiter=",",
                   header="t,pos_med,pos_q25,pos_q75,tilt_med,tilt_q25,tilt_q75",
                   comments="")
        print(f"wrote {out / (path.stem + '_bands.csv')} "
              f"({len(pos_rows)} windows)")
    return 0


def _kernel_workload(n_cycles: int) -> dict:
    """Timed standard planning workload on the active kernel path."""
    from . import kernels
    from .costs import CostConfig
    from .dynamics import hanging_state
    from .params import PlantParams
    from .planner import CranePlanner, PlannerConfig

    params = PlantParams()
    planner = CranePlanner(params, CostConfig(), PlannerConfig())
    x0 = hanging_state(params, q_crane=[0.2, 0.6, 1.2])
    steps = planner.cfg.horizon_steps
    poses = np.zeros((steps + 1, 6))
    target = np.array([1.9, -0.5, 0.4])
    pol, _ = planner.plan_cycle(x0, poses, target, 0.0, seed=0)  # warms jit
    t0 = time.perf_counter()
    for c in range(n_cycles):
        pol, _ = planner.plan_cycle(x0, poses, target, 0.0, seed=c,
                                    prev_policy=pol)
    wall = time.perf_counter() - t0
    per_cycle_ms = wall / n_cycles * 1e3
    model_steps = n_cycles * planner.cfg.iterations_per_cycle \
        * planner.cfg.sample_size * steps
    return {
        "numba_enabled": kernels.NUMBA_ENABLED,
        "cycles": n_cycles,
        "per_cycle_ms": per_cycle_ms,
        "steps_per_s": model_steps / wall,
    }


def cmd_kernel_bench(args) -> int:
    if args._inner:
        print(json.dumps(_kernel_workload(args.cycles)))
        return 0
    res_fast = _kernel_workload(args.cycles)
    # pure-numpy path needs a fresh interpreter with the env flag set
    env = dict(os.environ, CRANEMPC_PURE_NUMPY="1")
    n_slow = max(1, args.cycles // 20)
    proc = subprocess.run(
        [sys.executable, "-m", "cranempc.cli", "kernel-bench", "--_inner",
         "--cycles", str(n_slow)],
        capture_output=True, text=True, env=env)
    if proc.returncode != 0:
        print(f"ERROR: pure-numpy benchmark failed:\n{proc.stderr}",
              file=sys.stderr)
        return 1
    res_slow = json.loads(proc.stdout.strip().splitlines()[-1])
    print(f"{'path':<14}{'cycle ms':>12}{'model steps/s':>16}")
    print(f"{'numba jit':<14}{res_fast['per_cycle_ms']:>12.2f}"
          f"{res_fast['steps_per_s']:>16.0f}")
    print(f"{'pure numpy':<14}{res_slow['per_cycle_ms']:>12.2f}"
          f"{res_slow['steps_per_s']:>16.0f}")
    print(f"speedup: {res_slow['per_cycle_ms'] / res_fast['per_cycle_ms']:.1f}x")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "benchmark": cmd_benchmark,
        "ablation": cmd_ablation,
        "sysid-check": cmd_sysid_check,
        "plot-data": cmd_plot_data,
        "kernel-bench": cmd_kernel_bench,
    }
    try:
        return handlers[args.cmd](args)
    except Exception as exc:
        print(f"ERROR: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
