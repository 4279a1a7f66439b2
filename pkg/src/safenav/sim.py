"""Deterministic 2D world: collision stepping, depth rendering, guidance.

The robot is a disc; obstacles are axis-aligned boxes and circles with a
physical height used by the depth renderer. The renderer is a 2.5D
raycaster: pixel rays can pass over low obstacles and land on the ground
behind them, which is what creates the depth discontinuities the
traversability pipeline thresholds.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import (
    CameraModel,
    CircleObstacle,
    ControlInput,
    GuidanceSpec,
    RectObstacle,
    RobotState,
    Trajectory,
    Workspace,
    normalize_angle,
)
from .geometry import (
    Obstacle,
    disc_hits_obstacle,
    disc_outside_workspace,
    obstacle_at_time,
    points_in_obstacle,
    ray_circle_intersections,
    ray_rect_intersections,
)

SUBSTEP_LENGTH = 0.02  # meters; collision substep resolution (no tunneling)


class Outcome(str, Enum):
    RUNNING = "RUNNING"
    SUCCESS = "SUCCESS"
    TIMEOUT = "TIMEOUT"
    ABORTED = "ABORTED"


@dataclass(frozen=True)
class World:
    workspace: Workspace
    obstacles: tuple[Obstacle, ...]
    robot_diameter: float = 0.4

    def obstacles_at(self, t: float) -> tuple[Obstacle, ...]:
        return tuple(obstacle_at_time(o, t) for o in self.obstacles)

    @property
    def robot_radius(self) -> float:
        return self.robot_diameter / 2.0


@dataclass(frozen=True)
class EpisodeState:
    robot: RobotState
    elapsed: float
    collision_count: int
    done: Outcome
    in_contact: bool
    goal_center: tuple[float, float]
    goal_radius: float
    time_limit: float


def make_episode(
    world: World,
    start: RobotState,
    goal_center: tuple[float, float],
    goal_radius: float,
    time_limit: float,
) -> EpisodeState:
    if _collides(world, (start.x, start.y), 0.0):
        raise ValueError("robot start pose intersects an obstacle")
    return EpisodeState(
        robot=start,
        elapsed=0.0,
        collision_count=0,
        done=Outcome.RUNNING,
        in_contact=False,
        goal_center=(float(goal_center[0]), float(goal_center[1])),
        goal_radius=float(goal_radius),
        time_limit=float(time_limit),
    )


def _collides(world: World, pos: tuple[float, float], t: float) -> bool:
    r = world.robot_radius
    if disc_outside_workspace(pos, r, world.workspace):
        return True
    return any(disc_hits_obstacle(pos, r, o) for o in world.obstacles_at(t))


def mark_aborted(ep: EpisodeState) -> EpisodeState:
    if ep.done is not Outcome.RUNNING:
        raise ValueError("episode already terminal")
    return replace(ep, done=Outcome.ABORTED)


def advance(ep: EpisodeState, world: World, cmd: ControlInput, dt: float) -> EpisodeState:
    """One control period of unicycle motion with slide-and-count contacts.

    Motion is substepped so the disc never tunnels; on contact the position
    freezes at the last free substep while heading keeps integrating.
    A contiguous run of contact calls counts as one collision event.
    """
    if ep.done is not Outcome.RUNNING:
        raise ValueError("cannot advance a terminal episode")
    n_sub = max(1, math.ceil(abs(cmd.v) * dt / SUBSTEP_LENGTH))
    dt_sub = dt / n_sub
    x, y, th = ep.robot.x, ep.robot.y, ep.robot.theta
    contact = False
    for _ in range(n_sub):
        nx = x + cmd.v * math.cos(th) * dt_sub
        ny = y + cmd.v * math.sin(th) * dt_sub
        if _collides(world, (nx, ny), ep.elapsed):
            contact = True
        else:
            x, y = nx, ny
        th = normalize_angle(th + cmd.omega * dt_sub)
    collisions = ep.collision_count + (1 if contact and not ep.in_contact else 0)
    elapsed = ep.elapsed + dt
    done = ep.done
    if math.hypot(x - ep.goal_center[0], y - ep.goal_center[1]) <= ep.goal_radius:
        done = Outcome.SUCCESS
    elif elapsed > ep.time_limit:
        done = Outcome.TIMEOUT
    return replace(
        ep,
        robot=RobotState(x, y, th),
        elapsed=elapsed,
        collision_count=collisions,
        done=done,
        in_contact=contact,
    )


# --- synthetic depth rendering ---


def render_depth(world: World, pose: RobotState, cam: CameraModel, elapsed: float = 0.0) -> np.ndarray:
    """Depth image in [0, 1] (z-depth / max_range) from the robot pose.

    Per pixel: back-project the ray, intersect its horizontal projection
    with every obstacle footprint, and take the nearest of front-face, top
    surface, and ground hits. No hit caps at max range.
    """
    rows, cols = cam.rows, cam.cols
    cphi, sphi = math.cos(cam.pitch), math.sin(cam.pitch)
    a = (np.arange(cols) - cam.cx) / cam.fx  # camera-right coefficient
    b = (np.arange(rows) - cam.cy) / cam.fy  # camera-down coefficient
    aa, bb = np.meshgrid(a, b)  # (rows, cols)

    # Ray directions in the robot frame (x forward, y left, z up), scaled so
    # the camera-forward component is 1 (ray parameter equals z-depth).
    dx = cphi - bb * sphi
    dy = -aa
    dz = -bb * cphi - sphi
    horiz = np.maximum(np.hypot(dx, dy), 1e-12)
    ux, uy = dx / horiz, dy / horiz  # unit horizontal direction, robot frame
    slope = dz / horiz  # height change per meter of horizontal travel

    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    wx = ct * ux - st * uy
    wy = st * ux + ct * uy
    dirs = np.stack([wx.ravel(), wy.ravel()], axis=1)
    origin = np.array([pose.x, pose.y])
    g = slope.ravel()
    h = cam.height

    s_hit = np.full(dirs.shape[0], np.inf)
    for obs in world.obstacles_at(elapsed):
        if isinstance(obs, RectObstacle):
            s_en, s_ex = ray_rect_intersections(origin, dirs, obs)
        else:
            s_en, s_ex = ray_circle_intersections(origin, dirs, obs)
        hit = s_en <= s_ex
        front = hit & (h + g * s_en <= obs.height)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_top = np.where(g < 0.0, (obs.height - h) / np.where(g < 0.0, g, 1.0), np.inf)
        top = hit & ~front & (s_top >= s_en) & (s_top <= s_ex)
        cand = np.where(front, s_en, np.where(top, s_top, np.inf))
        s_hit = np.minimum(s_hit, cand)

    with np.errstate(divide="ignore"):
        s_ground = np.where(g < 0.0, -h / np.where(g < 0.0, g, -1.0), np.inf)
    s_final = np.minimum(s_hit, s_ground)
    depth = s_final / horiz.ravel()  # horizontal arc -> forward z-depth
    depth = np.clip(depth / cam.max_range, 0.0, 1.0)
    depth[~np.isfinite(depth)] = 1.0
    return depth.reshape(rows, cols)


# --- guidance providers ---


def load_replay_path(path: str | Path) -> np.ndarray:
    """Plain-text recorded path: one `x y` pair (world frame) per line."""
    pts = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"bad replay line: {line!r}")
            pts.append((float(parts[0]), float(parts[1])))
    if len(pts) < 2:
        raise ValueError("replay path needs at least 2 points")
    return np.asarray(pts, dtype=np.float64)


def _world_to_robot(points: np.ndarray, pose: RobotState) -> np.ndarray:
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    d = points - np.array([pose.x, pose.y])
    return np.stack([ct * d[:, 0] + st * d[:, 1], -st * d[:, 0] + ct * d[:, 1]], axis=1)


class _PlannerMap:
    """Uniform-cost distance-to-goal field over a rasterized obstacle grid."""

    def __init__(
        self,
        world: World,
        goal: tuple[float, float],
        resolution: float,
        stale: bool,
        inflation: float = 0.0,
        soft_margin: float = 0.0,
        soft_penalty: float = 0.0,
    ):
        ws = world.workspace
        self.resolution = resolution
        self.x0 = ws.x_min + resolution / 2.0
        self.y0 = ws.y_min + resolution / 2.0
        self.nx = max(1, int(round((ws.x_max - ws.x_min) / resolution)))
        self.ny = max(1, int(round((ws.y_max - ws.y_min) / resolution)))
        obstacles = [o for o in world.obstacles if not (stale and o.unseen)]
        xs = self.x0 + resolution * np.arange(self.nx)
        ys = self.y0 + resolution * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        blocked = np.zeros(pts.shape[0], dtype=bool)
        inflate = inflation + resolution * math.sqrt(2.0) / 2.0
        for obs in obstacles:
            obs = obstacle_at_time(obs, 0.0)
            if isinstance(obs, RectObstacle):
                grown = RectObstacle(
                    obs.x_min - inflate, obs.y_min - inflate,
                    obs.x_max + inflate, obs.y_max + inflate, obs.height,
                )
            else:
                grown = CircleObstacle(obs.cx, obs.cy, obs.radius + inflate, obs.height)
            blocked |= points_in_obstacle(pts, grown)
        self.blocked = blocked.reshape(self.nx, self.ny)
        if soft_margin > 0.0 and soft_penalty > 0.0 and self.blocked.any():
            from scipy.ndimage import distance_transform_edt

            clearance = distance_transform_edt(~self.blocked) * resolution
            ramp = np.maximum(0.0, 1.0 - clearance / soft_margin)
            self.cell_cost = 1.0 + soft_penalty * ramp
        else:
            self.cell_cost = np.ones((self.nx, self.ny))
        self.dist = self._dijkstra_from(self._cell_of(goal))

    def _cell_of(self, p: tuple[float, float]) -> tuple[int, int]:
        i = int(round((p[0] - self.x0) / self.resolution))
        j = int(round((p[1] - self.y0) / self.resolution))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def _center_of(self, cell: tuple[int, int]) -> tuple[float, float]:
        return (self.x0 + cell[0] * self.resolution, self.y0 + cell[1] * self.resolution)

    def _dijkstra_from(self, goal_cell: tuple[int, int]) -> np.ndarray:
        dist = np.full((self.nx, self.ny), np.inf)
        gi, gj = goal_cell
        if self.blocked[gi, gj]:
            return dist
        dist[gi, gj] = 0.0
        heap = [(0.0, gi, gj)]
        diag = math.sqrt(2.0)
        while heap:
            d, i, j = heapq.heappop(heap)
            if d > dist[i, j]:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < self.nx and 0 <= nj < self.ny):
                        continue
                    if self.blocked[ni, nj]:
                        continue
                    if di != 0 and dj != 0:
                        # no corner cutting through blocked orthogonals
                        if self.blocked[i + di, j] or self.blocked[i, j + dj]:
                            continue
                        step = diag
                    else:
                        step = 1.0
                    nd = d + step * 0.5 * (self.cell_cost[i, j] + self.cell_cost[ni, nj])
                    if nd < dist[ni, nj]:
                        dist[ni, nj] = nd
                        heapq.heappush(heap, (nd, ni, nj))
        return dist

    def path_from(self, start: tuple[float, float]) -> Optional[np.ndarray]:
        """Greedy descent of the distance field; None when unreachable."""
        cell = self._cell_of(start)
        if not np.isfinite(self.dist[cell]):
            # start cell blocked or disconnected; try the best free neighbor
            best = None
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ni, nj = cell[0] + di, cell[1] + dj
                    if 0 <= ni < self.nx and 0 <= nj < self.ny and np.isfinite(self.dist[ni, nj]):
                        if best is None or self.dist[ni, nj] < self.dist[best]:
                            best = (ni, nj)
            if best is None:
                return None
            cell = best
        cells = [cell]
        guard = self.nx * self.ny
        while self.dist[cells[-1]] > 0.0 and len(cells) <= guard:
            i, j = cells[-1]
            best = None
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < self.nx and 0 <= nj < self.ny):
                        continue
                    if di != 0 and dj != 0 and (self.blocked[i + di, j] or self.blocked[i, j + dj]):
                        continue
                    if best is None or self.dist[ni, nj] < self.dist[best]:
                        best = (ni, nj)
            if best is None or not np.isfinite(self.dist[best]) or self.dist[best] >= self.dist[i, j]:
                break
            cells.append(best)
        return np.asarray([self._center_of(c) for c in cells], dtype=np.float64)


def _resample_polyline(poly: np.ndarray, spacing: float, k: int) -> np.ndarray:
    """Arc-length resample to k points at the given spacing, padding at the end."""
    seg = np.diff(poly, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cum[-1]
    out = np.zeros((k, 2))
    for idx in range(k):
        s = min((idx + 1) * spacing, total)
        j = int(np.searchsorted(cum, s, side="right")) - 1
        j = min(j, len(lengths) - 1)
        if lengths[j] > 0:
            frac = (s - cum[j]) / lengths[j]
        else:
            frac = 0.0
        out[idx] = poly[j] + frac * seg[j]
    return out


class GuidanceProvider:
    """Stand-in for a learned direction model; emits robot-frame waypoints."""

    def __init__(self, spec: GuidanceSpec, world: World, goal: tuple[float, float]):
        self.spec = spec
        self._replay: Optional[np.ndarray] = None
        self._cursor = 0
        self._planner: Optional[_PlannerMap] = None
        if spec.kind == "replay":
            if spec.replay_path is None:
                raise ValueError("replay guidance needs replay_path")
            self._replay = load_replay_path(spec.replay_path)
        elif spec.kind == "planner":
            self._planner = _PlannerMap(
                world, goal, spec.planner_resolution, spec.stale_map,
                spec.planner_inflation, spec.planner_soft_margin, spec.planner_soft_penalty,
            )

    def trajectory(self, ep: EpisodeState, world: World, goal: tuple[float, float]) -> Trajectory:
        spec = self.spec
        pose = ep.robot
        if spec.kind == "straight_line":
            return Trajectory(self._straight(pose, goal))
        if spec.kind == "replay":
            return Trajectory(self._from_replay(pose))
        poly = self._planner.path_from((pose.x, pose.y)) if self._planner else None
        if poly is None or poly.shape[0] < 2:
            return Trajectory(self._straight(pose, goal))
        poly = np.vstack([[pose.x, pose.y], poly])
        pts = _resample_polyline(poly, spec.spacing, spec.k_points)
        return Trajectory(_world_to_robot(pts, pose))

    def _straight(self, pose: RobotState, goal: tuple[float, float]) -> np.ndarray:
        d = _world_to_robot(np.asarray([goal], dtype=np.float64), pose)[0]
        dist = math.hypot(d[0], d[1])
        if dist < 1e-9:
            return np.zeros((self.spec.k_points, 2))
        step = min(self.spec.spacing, dist / self.spec.k_points)
        unit = d / dist
        idx = np.arange(1, self.spec.k_points + 1, dtype=np.float64)
        return idx[:, None] * step * unit[None, :]

    def _from_replay(self, pose: RobotState) -> np.ndarray:
        pts = self._replay
        # advance the cursor while the next recorded point is nearer
        while self._cursor + 1 < len(pts):
            here = math.hypot(pts[self._cursor, 0] - pose.x, pts[self._cursor, 1] - pose.y)
            nxt = math.hypot(pts[self._cursor + 1, 0] - pose.x, pts[self._cursor + 1, 1] - pose.y)
            if nxt < here:
                self._cursor += 1
            else:
                break
        k = self.spec.k_points
        idx = np.minimum(np.arange(self._cursor + 1, self._cursor + 1 + k), len(pts) - 1)
        return _world_to_robot(pts[idx], pose)


def guidance(
    provider: GuidanceProvider,
    ep: EpisodeState,
    world: World,
    goal: tuple[float, float],
) -> Trajectory:
    """Next guidance trajectory in the current robot frame."""
    return provider.trajectory(ep, world, goal)
