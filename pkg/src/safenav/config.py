"""Scenario config files: explicit YAML, one-to-one with ScenarioConfig."""

from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

import yaml

from .domain import (
    CameraModel,
    CircleObstacle,
    GuidanceSpec,
    MpcConfig,
    OptimizerConfig,
    RectObstacle,
    RobotState,
    ScenarioConfig,
    ScoreGridSpec,
    Workspace,
)
from .supervisor import SupervisorConfig
from .traversability import TsmConfig


class ConfigError(Exception):
    """Scenario file failed to parse or validate."""


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "workspace": _plain(asdict(cfg.workspace)),
        "obstacles": {
            "rects": [_plain(asdict(r)) for r in cfg.rects],
            "circles": [_plain(asdict(c)) for c in cfg.circles],
        },
        "start": _plain(asdict(cfg.start)),
        "goal": {"center": [cfg.goal_center[0], cfg.goal_center[1]], "radius": cfg.goal_radius},
        "time_limit": cfg.time_limit,
        "guidance": _plain(asdict(cfg.guidance)),
        "score_source": cfg.score_source,
        "optimizer": _plain(asdict(cfg.optimizer)),
        "mpc": _plain(asdict(cfg.mpc)),
        "camera": _plain(asdict(cfg.camera)),
        "tsm": _plain(asdict(cfg.tsm)),
        "supervisor": _plain(asdict(cfg.supervisor)),
        "grid": _plain(asdict(cfg.grid)),
        "seed": cfg.seed,
        "trials": cfg.trials,
        "control_dt": cfg.control_dt,
    }


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"section {section!r} has unknown keys: {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            raise ConfigError(f"section {section!r} is missing key {f.name!r}")
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario file must hold a mapping at top level")
    required = {
        "workspace", "obstacles", "start", "goal", "time_limit", "guidance",
        "score_source", "optimizer", "mpc", "camera", "tsm", "supervisor",
        "grid", "seed", "trials", "control_dt",
    }
    missing = required - set(data)
    if missing:
        raise ConfigError(f"scenario file is missing sections: {sorted(missing)}")
    obstacles = data["obstacles"]
    if not isinstance(obstacles, dict) or set(obstacles) != {"rects", "circles"}:
        raise ConfigError("section 'obstacles' must hold 'rects' and 'circles' lists")
    goal = data["goal"]
    if not isinstance(goal, dict) or "center" not in goal or "radius" not in goal:
        raise ConfigError("section 'goal' needs 'center' and 'radius'")
    try:
        return ScenarioConfig(
            workspace=_build(Workspace, data["workspace"], "workspace"),
            rects=tuple(_build(RectObstacle, r, "obstacles.rects") for r in obstacles["rects"]),
            circles=tuple(_build(CircleObstacle, c, "obstacles.circles") for c in obstacles["circles"]),
            start=_build(RobotState, data["start"], "start"),
            goal_center=(float(goal["center"][0]), float(goal["center"][1])),
            goal_radius=float(goal["radius"]),
            time_limit=float(data["time_limit"]),
            guidance=_build(GuidanceSpec, data["guidance"], "guidance"),
            score_source=data["score_source"],
            optimizer=_build(OptimizerConfig, data["optimizer"], "optimizer"),
            mpc=_build(MpcConfig, data["mpc"], "mpc"),
            camera=_build(CameraModel, data["camera"], "camera"),
            tsm=_build(TsmConfig, data["tsm"], "tsm"),
            supervisor=_build(SupervisorConfig, data["supervisor"], "supervisor"),
            grid=_build(ScoreGridSpec, data["grid"], "grid"),
            seed=int(data["seed"]),
            trials=int(data["trials"]),
            control_dt=float(data["control_dt"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid scenario file: {exc}") from exc


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scenario_to_dict(cfg), f, sort_keys=False)


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_dict(data)
