"""Seeded benchmark scenario families.

Four families at desk scale: a straight corridor with protruding side
obstacles unknown to the guidance (A), the same plus mid-corridor blockers
(B), an open random disc field crossed on straight-line guidance, and a
winding narrow corridor followed on coarse-grid planner guidance.

Every family is a pure function of its seed; scene B reuses scene A's
geometry for the same seed and only adds obstacles.
"""

from __future__ import annotations

import math

import numpy as np

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

FAMILIES = ("UNSEEN_OBSTACLES_A", "UNSEEN_OBSTACLES_B", "DENSE_FIELD", "NARROW_CORRIDOR")

ROBOT_DIAMETER = 0.4
WALL_HEIGHT = 0.25
WALL_THICKNESS = 0.25


def _base_optimizer() -> OptimizerConfig:
    return OptimizerConfig(safety_threshold=-0.2, robot_width=ROBOT_DIAMETER)


def _base_tsm() -> TsmConfig:
    return TsmConfig(gaussian_sigma=0.8, row_weight_top=0.25, row_weight_bottom=1.6)


def _base_supervisor() -> SupervisorConfig:
    return SupervisorConfig(max_emergency_steps=60)


def _corridor_walls(x0: float, x1: float, half_width: float) -> list[RectObstacle]:
    return [
        RectObstacle(x0, half_width, x1, half_width + WALL_THICKNESS, height=WALL_HEIGHT),
        RectObstacle(x0, -half_width - WALL_THICKNESS, x1, -half_width, height=WALL_HEIGHT),
    ]


def _scene_a_geometry(rng: np.random.Generator):
    half = 1.0
    walls = _corridor_walls(-0.5, 9.5, half)
    n_side = int(rng.integers(3, 5))
    xs = np.sort(rng.uniform(2.0, 7.4, size=n_side))
    while np.any(np.diff(xs) < 1.1):
        xs = np.sort(rng.uniform(2.0, 7.4, size=n_side))
    side_obstacles = []
    for i, x in enumerate(xs):
        protrusion = float(rng.uniform(0.5, 0.85))
        depth = float(rng.uniform(0.3, 0.45))
        left = bool(rng.integers(0, 2)) if i > 0 else True
        if left:
            rect = RectObstacle(x, half - protrusion, x + depth, half, height=WALL_HEIGHT, unseen=True)
        else:
            rect = RectObstacle(x, -half, x + depth, -half + protrusion, height=WALL_HEIGHT, unseen=True)
        side_obstacles.append(rect)
    return walls, side_obstacles, xs


def _scene_b_extra(rng: np.random.Generator, side_xs: np.ndarray) -> list[RectObstacle]:
    blockers = []
    n_mid = int(rng.integers(2, 4))
    attempts = 0
    while len(blockers) < n_mid and attempts < 200:
        attempts += 1
        x = float(rng.uniform(2.6, 7.0))
        if any(abs(x - sx) < 1.0 for sx in side_xs):
            continue
        if any(abs(x - 0.5 * (b.x_min + b.x_max)) < 1.1 for b in blockers):
            continue
        off = float(rng.uniform(0.12, 0.35)) * (1 if rng.integers(0, 2) else -1)
        size = float(rng.uniform(0.3, 0.4))
        blockers.append(
            RectObstacle(
                x, off - size / 2, x + size, off + size / 2, height=WALL_HEIGHT, unseen=True
            )
        )
    return blockers


def _unseen_obstacles(seed: int, scene_b: bool) -> ScenarioConfig:
    rng = np.random.default_rng(seed + (0 if not scene_b else 0))  # same stream base
    walls, side_obstacles, xs = _scene_a_geometry(rng)
    rects = walls + side_obstacles
    if scene_b:
        rects = rects + _scene_b_extra(rng, xs)
    return ScenarioConfig(
        workspace=Workspace(-1.0, -1.6, 10.0, 1.6),
        rects=tuple(rects),
        circles=(),
        start=RobotState(0.3, 0.0, 0.0),
        goal_center=(8.8, 0.0),
        goal_radius=0.5,
        time_limit=75.0,
        guidance=GuidanceSpec(kind="planner", stale_map=True, k_points=9, spacing=0.22,
                              planner_inflation=ROBOT_DIAMETER / 2,
                              planner_soft_margin=0.55, planner_soft_penalty=1.5),
        score_source="depth-pipeline",
        optimizer=_base_optimizer(),
        mpc=MpcConfig(),
        camera=CameraModel(),
        tsm=_base_tsm(),
        supervisor=_base_supervisor(),
        grid=ScoreGridSpec(),
        seed=seed,
        trials=50,
    )


def unseen_obstacles_a(seed: int) -> ScenarioConfig:
    return _unseen_obstacles(seed, scene_b=False)


def unseen_obstacles_b(seed: int) -> ScenarioConfig:
    return _unseen_obstacles(seed, scene_b=True)


def dense_field(seed: int) -> ScenarioConfig:
    rng = np.random.default_rng(seed)
    discs: list[CircleObstacle] = []
    attempts = 0
    target = int(rng.integers(13, 17))
    while len(discs) < target and attempts < 4000:
        attempts += 1
        r = float(rng.uniform(0.16, 0.24))
        cx = float(rng.uniform(1.2, 5.8))
        cy = float(rng.uniform(-2.1, 2.1))
        if math.hypot(cx - 0.0, cy) < 1.0 + r:
            continue
        if any(math.hypot(cx - d.cx, cy - d.cy) < r + d.radius + 0.75 for d in discs):
            continue
        discs.append(CircleObstacle(cx, cy, r, height=WALL_HEIGHT, unseen=True))
    return ScenarioConfig(
        workspace=Workspace(-1.2, -3.0, 9.5, 3.0),
        rects=(),
        circles=tuple(discs),
        start=RobotState(0.0, 0.0, 0.0),
        goal_center=(7.6, 0.0),
        goal_radius=1.5,
        time_limit=90.0,
        guidance=GuidanceSpec(kind="straight_line", k_points=9, spacing=0.22),
        score_source="depth-pipeline",
        optimizer=_base_optimizer(),
        mpc=MpcConfig(),
        camera=CameraModel(),
        tsm=_base_tsm(),
        supervisor=_base_supervisor(),
        grid=ScoreGridSpec(),
        seed=seed,
        trials=50,
    )


def narrow_corridor(seed: int) -> ScenarioConfig:
    rng = np.random.default_rng(seed)
    d = ROBOT_DIAMETER
    # axis-aligned winding path: forward, lateral, forward, lateral, forward
    seg_len = [float(rng.uniform(2.0, 2.8)) for _ in range(3)]
    lat_len = [float(rng.uniform(1.4, 2.2)) for _ in range(2)]
    lat_dir = [1 if rng.integers(0, 2) else -1, 0]
    lat_dir[1] = -lat_dir[0] if rng.integers(0, 2) else lat_dir[0]
    width = float(rng.uniform(1.8 * d, 2.5 * d))
    half = width / 2.0

    # centerline waypoints
    pts = [(0.0, 0.0)]
    x, y = 0.0, 0.0
    x += seg_len[0]
    pts.append((x, y))
    y += lat_dir[0] * lat_len[0]
    pts.append((x, y))
    x += seg_len[1]
    pts.append((x, y))
    y += lat_dir[1] * lat_len[1]
    pts.append((x, y))
    x += seg_len[2]
    pts.append((x, y))

    t = WALL_THICKNESS
    rects: list[RectObstacle] = []

    def wall(x0, y0, x1, y1):
        rects.append(RectObstacle(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1), height=WALL_HEIGHT))

    # flank each centerline segment with walls offset by half+t/2,
    # shortened/extended so inner corners stay open and outer corners close
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        if ay == by:  # horizontal segment
            x0, x1 = min(ax, bx), max(ax, bx)
            wall(x0 - half - t, ay + half, x1 + half + t, ay + half + t)
            wall(x0 - half - t, ay - half - t, x1 + half + t, ay - half)
        else:  # vertical segment
            y0, y1 = min(ay, by), max(ay, by)
            wall(ax + half, y0 + half, ax + half + t, y1 - half)
            wall(ax - half - t, y0 + half, ax - half, y1 - half)
    # close the corridor ends
    sx, sy = pts[0]
    wall(sx - half - t, sy - half - t, sx - half, sy + half + t)
    gx, gy = pts[-1]
    wall(gx + half, gy - half - t, gx + half + t, gy + half + t)

    # prune wall slabs that overlap the corridor interior at corners
    def clear_of_path(rect: RectObstacle) -> bool:
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            x0, x1 = min(ax, bx) - half, max(ax, bx) + half
            y0, y1 = min(ay, by) - half, max(ay, by) + half
            ox = max(0.0, min(rect.x_max, x1) - max(rect.x_min, x0))
            oy = max(0.0, min(rect.y_max, y1) - max(rect.y_min, y0))
            if ox > 1e-9 and oy > 1e-9:
                return False
        return True

    rects = [r for r in rects if clear_of_path(r)]

    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    ws = Workspace(
        min(xs_all) - half - t - 0.3,
        min(ys_all) - half - t - 0.3,
        max(xs_all) + half + t + 0.3,
        max(ys_all) + half + t + 0.3,
    )
    return ScenarioConfig(
        workspace=ws,
        rects=tuple(rects),
        circles=(),
        start=RobotState(0.0, 0.0, 0.0),
        goal_center=pts[-1],
        goal_radius=0.45,
        time_limit=100.0,
        guidance=GuidanceSpec(kind="planner", stale_map=False, k_points=9, spacing=0.22,
                              planner_resolution=0.15, planner_inflation=0.05),
        score_source="depth-pipeline",
        optimizer=_base_optimizer(),
        mpc=MpcConfig(),
        camera=CameraModel(),
        tsm=_base_tsm(),
        supervisor=_base_supervisor(),
        grid=ScoreGridSpec(),
        seed=seed,
        trials=50,
    )


_GENERATORS = {
    "UNSEEN_OBSTACLES_A": unseen_obstacles_a,
    "UNSEEN_OBSTACLES_B": unseen_obstacles_b,
    "DENSE_FIELD": dense_field,
    "NARROW_CORRIDOR": narrow_corridor,
}


def scenario_generators(family: str, seed: int) -> ScenarioConfig:
    """Deterministic scenario instance for a family and seed."""
    if family not in _GENERATORS:
        raise ValueError(f"unknown scenario family {family!r}; choose from {FAMILIES}")
    return _GENERATORS[family](seed)
