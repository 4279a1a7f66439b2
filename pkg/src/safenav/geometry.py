"""2D geometry predicates shared by the simulator and the score mappers."""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

from .domain import CircleObstacle, RectObstacle, Workspace

Obstacle = Union[RectObstacle, CircleObstacle]


def obstacle_at_time(obs: Obstacle, t: float) -> Obstacle:
    """Position of a (possibly scripted) obstacle at episode time ``t``.

    Scripted obstacles move along their waypoint loop at constant speed;
    static obstacles are returned unchanged.
    """
    if not obs.waypoints or obs.speed <= 0.0 or len(obs.waypoints) < 2:
        return obs
    wps = np.asarray(obs.waypoints, dtype=np.float64)
    seg = np.diff(np.vstack([wps, wps[:1]]), axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    if total <= 0.0:
        return obs
    s = math.fmod(obs.speed * t, total)
    for i, L in enumerate(seg_len):
        if s <= L or i == len(seg_len) - 1:
            frac = s / L if L > 0 else 0.0
            px = wps[i, 0] + frac * seg[i, 0]
            py = wps[i, 1] + frac * seg[i, 1]
            break
        s -= L
    if isinstance(obs, CircleObstacle):
        return CircleObstacle(px, py, obs.radius, obs.height, obs.unseen)
    cx0 = 0.5 * (obs.x_min + obs.x_max)
    cy0 = 0.5 * (obs.y_min + obs.y_max)
    dx, dy = px - cx0, py - cy0
    return RectObstacle(
        obs.x_min + dx, obs.y_min + dy, obs.x_max + dx, obs.y_max + dy, obs.height, obs.unseen
    )


def points_in_obstacle(pts: np.ndarray, obs: Obstacle) -> np.ndarray:
    """Boolean mask of (N, 2) world points inside the obstacle footprint."""
    if isinstance(obs, RectObstacle):
        return (
            (pts[:, 0] >= obs.x_min)
            & (pts[:, 0] <= obs.x_max)
            & (pts[:, 1] >= obs.y_min)
            & (pts[:, 1] <= obs.y_max)
        )
    d2 = (pts[:, 0] - obs.cx) ** 2 + (pts[:, 1] - obs.cy) ** 2
    return d2 <= obs.radius**2


def distance_to_obstacle(p: tuple[float, float], obs: Obstacle) -> float:
    """Euclidean distance from a point to the obstacle surface (0 inside)."""
    if isinstance(obs, RectObstacle):
        dx = max(obs.x_min - p[0], 0.0, p[0] - obs.x_max)
        dy = max(obs.y_min - p[1], 0.0, p[1] - obs.y_max)
        return math.hypot(dx, dy)
    return max(0.0, math.hypot(p[0] - obs.cx, p[1] - obs.cy) - obs.radius)


def disc_hits_obstacle(center: tuple[float, float], radius: float, obs: Obstacle) -> bool:
    return distance_to_obstacle(center, obs) < radius


def disc_outside_workspace(center: tuple[float, float], radius: float, ws: Workspace) -> bool:
    return (
        center[0] - radius < ws.x_min
        or center[0] + radius > ws.x_max
        or center[1] - radius < ws.y_min
        or center[1] + radius > ws.y_max
    )


def ray_rect_intersections(
    origin: np.ndarray, dirs: np.ndarray, rect: RectObstacle
) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit ray parameters against an axis-aligned box (slab method).

    ``dirs`` is (N, 2) unit directions. Returns (t_enter, t_exit); rays that
    miss have t_enter > t_exit. Entry parameters are clipped at 0 (origins
    inside the box enter immediately).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (np.array([rect.x_min, rect.y_min]) - origin) * inv
    t2 = (np.array([rect.x_max, rect.y_max]) - origin) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    lo = np.minimum(t1, t2).max(axis=1)
    hi = np.maximum(t1, t2).min(axis=1)
    # Zero-direction axes: miss if the origin is outside the slab.
    for axis, (mn, mx) in enumerate([(rect.x_min, rect.x_max), (rect.y_min, rect.y_max)]):
        zero = dirs[:, axis] == 0.0
        outside = (origin[axis] < mn) | (origin[axis] > mx)
        miss = zero & outside
        lo = np.where(miss, np.inf, lo)
        hi = np.where(miss, -np.inf, hi)
    return np.maximum(lo, 0.0), hi


def ray_circle_intersections(
    origin: np.ndarray, dirs: np.ndarray, circ: CircleObstacle
) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit ray parameters against a circle; misses have enter > exit."""
    oc = origin - np.array([circ.cx, circ.cy])
    b = dirs @ oc
    c = oc @ oc - circ.radius**2
    disc = b * b - c
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_enter = np.where(ok, -b - sq, np.inf)
    t_exit = np.where(ok, -b + sq, -np.inf)
    behind = t_exit < 0.0
    t_enter = np.where(behind, np.inf, np.maximum(t_enter, 0.0))
    t_exit = np.where(behind, -np.inf, t_exit)
    return t_enter, t_exit


def min_clearance(
    p: tuple[float, float],
    obstacles: Sequence[Obstacle],
    workspace: Workspace,
    robot_radius: float,
) -> float:
    """Distance from the robot disc edge to the nearest obstacle/boundary."""
    d = min(
        p[0] - workspace.x_min,
        workspace.x_max - p[0],
        p[1] - workspace.y_min,
        workspace.y_max - p[1],
    )
    for obs in obstacles:
        d = min(d, distance_to_obstacle(p, obs))
    return d - robot_radius
