"""Benchmark harness: seeded trial batches, metrics, and result emission.

A trial runs one episode of the per-step control loop under a method
variant:

  full          render depth -> score map -> refine -> track / emergency
  wo_tsm        ground-truth occupancy scores instead of the depth pipeline
  wo_em         emergency behavior disabled; infeasible steps track the
                raw guidance directly
  raw_guidance  controller tracks the provider output, no safety layer
                (also the closest stand-in for removing the refinement
                layer entirely, which would otherwise need an external
                nonlinear solver)

Trials are deterministic in (config, variant, seed) and independent, so
batches parallelize over processes without changing results.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import mpc, stein_es, supervisor
from .domain import RobotState, ScenarioConfig
from .geometry import min_clearance
from .sim import (
    EpisodeState,
    GuidanceProvider,
    Outcome,
    World,
    advance,
    make_episode,
    mark_aborted,
    render_depth,
)
from .traversability import depth_to_ground_scores, score_from_occupancy

VARIANTS = ("full", "raw_guidance", "wo_tsm", "wo_em")

_STEP_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: str
    variant: str
    seed: int
    outcome: str
    collisions: int
    elapsed: float
    path_length: float
    min_clearance: float
    steps: int
    emergency_steps: int
    safety_gate_violations: int

    def to_json(self) -> str:
        d = asdict(self)
        d["elapsed"] = round(self.elapsed, 6)
        d["path_length"] = round(self.path_length, 6)
        d["min_clearance"] = round(self.min_clearance, 6)
        return json.dumps(d, sort_keys=True)


def build_world(cfg: ScenarioConfig) -> World:
    return World(
        workspace=cfg.workspace,
        obstacles=tuple(cfg.rects) + tuple(cfg.circles),
        robot_diameter=cfg.optimizer.robot_width,
    )


def _score_grid(cfg: ScenarioConfig, world: World, ep: EpisodeState, variant: str):
    if variant == "wo_tsm" or cfg.score_source == "ground-truth":
        return score_from_occupancy(
            world.obstacles, cfg.workspace, ep.robot, cfg.grid, elapsed=ep.elapsed,
            out_of_grid_score=cfg.tsm.out_of_grid_score,
        )
    depth = render_depth(world, ep.robot, cfg.camera, ep.elapsed)
    return depth_to_ground_scores(depth, cfg.tsm, cfg.camera, cfg.grid)


def run_trial(
    cfg: ScenarioConfig,
    variant: str,
    seed: int,
    scenario_id: str = "scenario",
    trace: Optional[list] = None,
) -> TrialRecord:
    """One seeded episode under the given method variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    world = build_world(cfg)
    ep = make_episode(world, cfg.start, cfg.goal_center, cfg.goal_radius, cfg.time_limit)
    provider = GuidanceProvider(cfg.guidance, world, cfg.goal_center)
    sup_cfg = cfg.supervisor
    if variant == "wo_em":
        sup_cfg = supervisor.SupervisorConfig(
            emergency_omega=sup_cfg.emergency_omega,
            max_emergency_steps=sup_cfg.max_emergency_steps,
            free_mass_margin=sup_cfg.free_mass_margin,
            emergency_enabled=False,
        )

    warm = None
    latch = None
    consecutive_emergency = 0
    total_emergency = 0
    violations = 0
    path_length = 0.0
    clearance = min_clearance((ep.robot.x, ep.robot.y), world.obstacles, cfg.workspace, world.robot_radius)
    steps = 0
    origin = RobotState(0.0, 0.0, 0.0)

    while ep.done is Outcome.RUNNING:
        guid = provider.trajectory(ep, world, cfg.goal_center)
        mode = "TRACK"
        if variant == "raw_guidance":
            cmd, warm = mpc.step(origin, guid, warm, cfg.mpc)
        else:
            grid = _score_grid(cfg, world, ep, variant)
            step_seed = seed * _STEP_SEED_STRIDE + steps
            dec = supervisor.step(
                origin, guid, grid, warm, cfg.optimizer, cfg.mpc, sup_cfg, step_seed,
                emergency_latch=latch,
            )
            cmd = dec.command
            warm = dec.warm
            mode = dec.mode.value
            if dec.mode is supervisor.Mode.EMERGENCY_ROTATE:
                latch = dec.rotate_direction
                consecutive_emergency += 1
                total_emergency += 1
                if consecutive_emergency > sup_cfg.max_emergency_steps:
                    ep = mark_aborted(ep)
                    break
            else:
                latch = None
                consecutive_emergency = 0
                if dec.refined is not None:
                    # independent safety-gate re-check, counted per decision
                    if not stein_es.tube_feasible(dec.refined.best_scaling, grid, guid, cfg.optimizer):
                        violations += 1
        prev = (ep.robot.x, ep.robot.y)
        ep = advance(ep, world, cmd, cfg.control_dt)
        path_length += math.hypot(ep.robot.x - prev[0], ep.robot.y - prev[1])
        clearance = min(
            clearance,
            min_clearance((ep.robot.x, ep.robot.y), world.obstacles_at(ep.elapsed), cfg.workspace, world.robot_radius),
        )
        if trace is not None:
            trace.append(
                {
                    "step": steps,
                    "t": round(ep.elapsed, 4),
                    "x": round(ep.robot.x, 5),
                    "y": round(ep.robot.y, 5),
                    "theta": round(ep.robot.theta, 5),
                    "v": round(cmd.v, 5),
                    "omega": round(cmd.omega, 5),
                    "mode": mode,
                    "collisions": ep.collision_count,
                }
            )
        steps += 1

    return TrialRecord(
        scenario_id=scenario_id,
        variant=variant,
        seed=seed,
        outcome=ep.done.value,
        collisions=ep.collision_count,
        elapsed=ep.elapsed,
        path_length=path_length,
        min_clearance=clearance,
        steps=steps,
        emergency_steps=total_emergency,
        safety_gate_violations=violations,
    )


def _trial_args(args) -> TrialRecord:
    cfg, variant, seed, scenario_id = args
    return run_trial(cfg, variant, seed, scenario_id)


def _family_trial_args(args) -> TrialRecord:
    family, variant, seed = args
    from .scenarios import scenario_generators

    cfg = scenario_generators(family, seed)
    return run_trial(cfg, variant, seed, family)


def run_family_batch(
    family: str,
    variant: str,
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> list[TrialRecord]:
    """Seeded trials with a fresh generator instance per trial.

    Each trial k draws scenario seed base_seed + k and runs one episode,
    mirroring repeated experiments over randomized scene layouts.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    jobs = [(family, variant, base_seed + i) for i in range(trials)]
    if workers <= 1:
        records = [_family_trial_args(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_family_trial_args, jobs))
    return sorted(records, key=lambda r: r.seed)


def run_batch(
    cfg: ScenarioConfig,
    variant: str,
    trials: int,
    base_seed: int,
    scenario_id: str = "scenario",
    workers: int = 1,
) -> list[TrialRecord]:
    """``trials`` independent episodes seeded base_seed + index."""
    if trials < 1:
        raise ValueError("need at least one trial")
    jobs = [(cfg, variant, base_seed + i, scenario_id) for i in range(trials)]
    if workers <= 1:
        records = [run_trial(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial_args, jobs))
    return sorted(records, key=lambda r: r.seed)


def _bootstrap_ci(values: np.ndarray, stat, rng: np.random.Generator, n_boot: int = 1000):
    if values.size == 0:
        return (float("nan"), float("nan"))
    stats = np.empty(n_boot)
    for i in range(n_boot):
        sample = values[rng.integers(0, values.size, size=values.size)]
        stats[i] = stat(sample)
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return (float(lo), float(hi))


def summarize(records: list[TrialRecord], ci_seed: int = 0) -> dict:
    """Per-variant success rate and mean collisions with bootstrap CIs."""
    if not records:
        raise ValueError("no records to summarize")
    out: dict = {"variants": {}, "notes": {
        "raw_guidance": "provider output tracked by the controller with no refinement layer",
    }}
    variants = sorted({r.variant for r in records})
    for variant in variants:
        rows = [r for r in records if r.variant == variant]
        success = np.array([1.0 if r.outcome == "SUCCESS" else 0.0 for r in rows])
        collisions = np.array([float(r.collisions) for r in rows], dtype=np.float64)
        rng = np.random.default_rng(ci_seed + 7919)
        s_lo, s_hi = _bootstrap_ci(success, np.mean, rng)
        c_lo, c_hi = _bootstrap_ci(collisions, np.mean, rng)
        out["variants"][variant] = {
            "trials": len(rows),
            "success_rate": round(float(success.mean()), 6),
            "success_ci95": [round(s_lo, 6), round(s_hi, 6)],
            "mean_collisions": round(float(collisions.mean()), 6),
            "collisions_ci95": [round(c_lo, 6), round(c_hi, 6)],
            "mean_path_length": round(float(np.mean([r.path_length for r in rows])), 6),
            "mean_min_clearance": round(float(np.mean([r.min_clearance for r in rows])), 6),
            "safety_gate_violations": int(sum(r.safety_gate_violations for r in rows)),
        }
    return out


def emit_results(
    records: list[TrialRecord],
    out_path: str | Path,
    summary: Optional[dict] = None,
) -> dict:
    """Write one record per line (JSON) and return the summary block."""
    if not records:
        raise ValueError("refusing to emit an empty record set")
    out_path = Path(out_path)
    try:
        with open(out_path, "w") as f:
            for record in records:
                f.write(record.to_json() + "\n")
    except OSError:
        raise
    if summary is None:
        summary = summarize(records)
    return summary


def write_trace_csv(trace_rows: list[dict], path: str | Path) -> None:
    """Per-step trace for plotting: one CSV row per control step."""
    import csv

    if not trace_rows:
        raise ValueError("no trace rows to write")
    fieldnames = ["trial_seed", "step", "t", "x", "y", "theta", "v", "omega", "mode", "collisions"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in trace_rows:
            writer.writerow(row)


def load_records(path: str | Path) -> list[TrialRecord]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            records.append(TrialRecord(**data))
    return records
