"""Human-readable (JSON) config round-tripping and config hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .control import NoiseConfig, PidAxisGains, PidConfig
from .costs import CostConfig
from .params import (ActuatorParams, CraneParams, PlantParams, SegmentParams)
from .planner import PlannerConfig


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _plain(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_hash(obj) -> str:
    """Stable short hash of any config-like object."""
    blob = json.dumps(_plain(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def plant_to_dict(p: PlantParams) -> dict:
    return _plain(p)


def plant_from_dict(d: dict) -> PlantParams:
    crane = CraneParams(**{**d["crane"],
                           "slew_range": tuple(d["crane"]["slew_range"]),
                           "luff_range": tuple(d["crane"]["luff_range"]),
                           "hoist_range": tuple(d["crane"]["hoist_range"])})
    acts = tuple(ActuatorParams(**a) for a in d["actuators"])
    segs = tuple(SegmentParams(**s) for s in d["segments"])
    return PlantParams(crane=crane, actuators=acts, segments=segs,
                       hook_locked=d.get("hook_locked", False))


def pid_from_dict(d: dict) -> PidConfig:
    return PidConfig(
        joint=tuple(PidAxisGains(**g) for g in d["joint"]),
        sway=tuple(PidAxisGains(**g) for g in d["sway"]),
        integrator_clamp=d["integrator_clamp"])


def bundle(plant: PlantParams, cost: CostConfig, planner: PlannerConfig,
           pid: PidConfig, noise: NoiseConfig) -> dict:
    return {
        "plant": _plain(plant),
        "cost": _plain(cost),
        "planner": _plain(planner),
        "pid": _plain(pid),
        "noise": _plain(noise),
    }


def save_config(path, cfg: dict) -> None:
    Path(path).write_text(json.dumps(_plain(cfg), indent=2, sort_keys=True))


def load_config(path) -> dict:
    d = json.loads(Path(path).read_text())
    out = {}
    if "plant" in d:
        out["plant"] = plant_from_dict(d["plant"])
    if "cost" in d:
        out["cost"] = CostConfig(**d["cost"])
    if "planner" in d:
        out["planner"] = PlannerConfig(**d["planner"])
    if "pid" in d:
        out["pid"] = pid_from_dict(d["pid"])
    if "noise" in d:
        out["noise"] = NoiseConfig(**d["noise"])
    return out
