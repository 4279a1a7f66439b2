"""Shared domain types and frame conventions.

Robot frame: x forward, y left, heading counterclockwise from +x.
Score grids index row-major with rows along +x and columns along +y;
``origin`` is the world position of the (0, 0) cell center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .supervisor import SupervisorConfig
    from .traversability import TsmConfig

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    elif wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("robot position must be finite")
        object.__setattr__(self, "theta", normalize_angle(self.theta))


@dataclass(frozen=True)
class ControlInput:
    v: float
    omega: float


class Trajectory:
    """Ordered 2D waypoints (meters, robot frame). Immutable."""

    __slots__ = ("points",)

    def __init__(self, points: Sequence | np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected (K, 2) points, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError("trajectory needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory points must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"Trajectory({self.points.shape[0]} points)"


class GroundScoreGrid:
    """Traversability score field in [-1, 1] over a metric grid.

    Lower is safer. ``out_of_grid_score`` is returned for queries outside
    the grid extent (boundary-neutral 0.0 by default).
    """

    __slots__ = ("values", "resolution", "origin", "out_of_grid_score")

    def __init__(
        self,
        values: np.ndarray,
        resolution: float,
        origin: tuple[float, float],
        out_of_grid_score: float = 0.0,
    ):
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("grid values must be 2-D")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if vals.size and (vals.min() < -1.0 - 1e-12 or vals.max() > 1.0 + 1e-12):
            raise ValueError("grid values must lie in [-1, 1]")
        vals = vals.copy()
        vals.setflags(write=False)
        self.values = vals
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.out_of_grid_score = float(out_of_grid_score)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + row * self.resolution,
            self.origin[1] + col * self.resolution,
        )


def grid_lookup(grid: GroundScoreGrid, p: tuple[float, float]) -> float:
    """Bilinear interpolation of the score at point ``p`` (robot frame)."""
    return float(grid_lookup_many(grid, np.asarray([p], dtype=np.float64))[0])


def grid_lookup_many(grid: GroundScoreGrid, pts: np.ndarray) -> np.ndarray:
    """Vectorized bilinear lookup for an (N, 2) array of points."""
    pts = np.asarray(pts, dtype=np.float64)
    fr = (pts[..., 0] - grid.origin[0]) / grid.resolution
    fc = (pts[..., 1] - grid.origin[1]) / grid.resolution
    inside = (fr >= 0.0) & (fr <= grid.rows - 1) & (fc >= 0.0) & (fc <= grid.cols - 1)

    fr_in = np.clip(fr, 0.0, grid.rows - 1)
    fc_in = np.clip(fc, 0.0, grid.cols - 1)
    r0 = np.minimum(fr_in.astype(np.int64), grid.rows - 2) if grid.rows > 1 else np.zeros_like(fr_in, dtype=np.int64)
    c0 = np.minimum(fc_in.astype(np.int64), grid.cols - 2) if grid.cols > 1 else np.zeros_like(fc_in, dtype=np.int64)
    r1 = np.minimum(r0 + 1, grid.rows - 1)
    c1 = np.minimum(c0 + 1, grid.cols - 1)
    ar = fr_in - r0
    ac = fc_in - c0

    v = grid.values
    interp = (
        v[r0, c0] * (1 - ar) * (1 - ac)
        + v[r1, c0] * ar * (1 - ac)
        + v[r0, c1] * (1 - ar) * ac
        + v[r1, c1] * ar * ac
    )
    return np.where(inside, interp, grid.out_of_grid_score)


# --- world geometry (value objects shared by sim, scoring, and configs) ---


@dataclass(frozen=True)
class RectObstacle:
    """Axis-aligned box footprint, extruded to ``height`` for rendering."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height: float = 0.25
    unseen: bool = False  # absent from stale planner maps
    waypoints: Optional[tuple[tuple[float, float], ...]] = None
    speed: float = 0.0

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("rectangle extents must be well-ordered")


@dataclass(frozen=True)
class CircleObstacle:
    cx: float
    cy: float
    radius: float
    height: float = 0.25
    unseen: bool = False
    waypoints: Optional[tuple[tuple[float, float], ...]] = None
    speed: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")


@dataclass(frozen=True)
class Workspace:
    x_min: float
    y_min: float
    x_max: float
    y_max: float


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: height above ground, pitched down by ``pitch`` rad.

    The defaults put the visible ground band at roughly 0.25..2.9 m ahead,
    looking over desk-scale obstacles (mast-mounted wide lens).
    """

    rows: int = 48
    cols: int = 64
    fx: float = 24.0
    fy: float = 40.0
    cx: float = 31.5
    cy: float = 23.5
    height: float = 0.8
    pitch: float = 0.8029
    max_range: float = 4.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @property
    def hfov(self) -> float:
        return 2.0 * math.atan2(self.cols / 2.0, self.fx)


@dataclass(frozen=True)
class ScoreGridSpec:
    """Extent of the robot-frame ground score grid."""

    x_min: float = -0.6
    y_min: float = -2.0
    rows: int = 46
    cols: int = 51
    resolution: float = 0.08

    @property
    def origin(self) -> tuple[float, float]:
        return (self.x_min, self.y_min)


@dataclass(frozen=True)
class OptimizerConfig:
    particles: int = 4
    samples: int = 16
    iterations: int = 10
    kernel_weight: float = 0.1
    step_size: float = 0.7
    kernel_bandwidth: float | str = "median-heuristic"
    safety_weight: float = 2.0
    reg_weight: float = 0.5
    tracking_weight: tuple[float, float] = (1.0, 1.0)
    safety_threshold: float = -0.3
    robot_width: float = 0.4
    tube_samples: int = 5
    init_mean_spread: float = 0.4
    init_cov_scale: float = 0.04
    scaling_min: float = 0.0
    scaling_max: float = 2.5
    cov_floor: float = 1e-6
    # A refined trajectory collapsed to (near) zero length is not a valid
    # refinement: it would always "satisfy" the tube constraint inside the
    # robot's own footprint, and tiny feasible hops let the robot creep
    # into pockets it cannot rotate out of. Feasible samples must keep
    # this much extent (or the full guidance extent when shorter).
    min_refined_extent: float = 0.5
    literal_alg1_covariance: bool = False
    literal_kernel_sign: bool = False

    def __post_init__(self):
        if self.particles < 1 or self.samples < 2 or self.iterations < 1:
            raise ValueError("particles >= 1, samples >= 2, iterations >= 1 required")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.safety_weight < 0 or self.reg_weight < 0:
            raise ValueError("weights must be non-negative")
        if self.robot_width <= 0:
            raise ValueError("robot_width must be positive")
        if self.tube_samples < 2:
            raise ValueError("tube_samples >= 2 required")
        if isinstance(self.kernel_bandwidth, str) and self.kernel_bandwidth != "median-heuristic":
            raise ValueError("kernel_bandwidth must be a number or 'median-heuristic'")


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 8
    dt: float = 0.25
    state_weight: tuple[float, float, float] = (2.0, 2.0, 0.5)
    control_weight: tuple[float, float] = (0.1, 0.05)
    terminal_weight: tuple[float, float, float] = (8.0, 8.0, 2.0)
    v_min: float = 0.0
    v_max: float = 1.0
    omega_max: float = 1.5
    workspace_bounds: Optional[tuple[float, float, float, float]] = None
    workspace_penalty: float = 0.0
    solver_iters: int = 30
    step_halvings: int = 10

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 1:
            raise ValueError("dt > 0 and horizon >= 1 required")
        if self.v_max < self.v_min or self.omega_max <= 0:
            raise ValueError("control bounds must be well-ordered")


@dataclass(frozen=True)
class GuidanceSpec:
    """Pluggable guidance source standing in for a learned direction model."""

    kind: str = "straight_line"  # straight_line | replay | planner
    k_points: int = 9
    spacing: float = 0.22
    replay_path: Optional[str] = None
    stale_map: bool = False
    planner_resolution: float = 0.15
    # Obstacle inflation for the planner map (a body-aware guidance source;
    # 0 reproduces a wall-hugging geometric shortest path).
    planner_inflation: float = 0.0
    # Soft clearance preference: cells within soft_margin of an obstacle
    # cost up to (1 + soft_penalty) x. Zero keeps pure shortest paths.
    planner_soft_margin: float = 0.0
    planner_soft_penalty: float = 0.0

    def __post_init__(self):
        if self.kind not in ("straight_line", "replay", "planner"):
            raise ValueError(f"unknown guidance kind {self.kind!r}")
        if self.k_points < 2:
            raise ValueError("guidance needs k_points >= 2")
        if self.spacing <= 0 or self.planner_resolution <= 0:
            raise ValueError("spacing and planner_resolution must be positive")
        if self.planner_inflation < 0 or self.planner_soft_margin < 0 or self.planner_soft_penalty < 0:
            raise ValueError("planner inflation/soft-cost parameters must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one benchmark episode family instance."""

    workspace: Workspace
    rects: tuple[RectObstacle, ...]
    circles: tuple[CircleObstacle, ...]
    start: RobotState
    goal_center: tuple[float, float]
    goal_radius: float
    time_limit: float
    guidance: GuidanceSpec
    score_source: str  # depth-pipeline | ground-truth
    optimizer: OptimizerConfig
    mpc: MpcConfig
    camera: CameraModel
    tsm: "TsmConfig"
    supervisor: "SupervisorConfig"
    grid: ScoreGridSpec
    seed: int = 0
    trials: int = 50
    control_dt: float = 0.25

    def __post_init__(self):
        if self.goal_radius <= 0:
            raise ValueError("goal radius must be positive")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.score_source not in ("depth-pipeline", "ground-truth"):
            raise ValueError(f"unknown score_source {self.score_source!r}")
