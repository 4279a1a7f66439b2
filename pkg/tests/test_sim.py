import math

import numpy as np
import pytest

from safenav.domain import (
    CameraModel,
    CircleObstacle,
    ControlInput,
    GuidanceSpec,
    RectObstacle,
    RobotState,
    Workspace,
)
from safenav.geometry import (
    distance_to_obstacle,
    obstacle_at_time,
    points_in_obstacle,
    ray_circle_intersections,
    ray_rect_intersections,
)
from safenav.sim import (
    GuidanceProvider,
    Outcome,
    World,
    advance,
    guidance,
    load_replay_path,
    make_episode,
    mark_aborted,
    render_depth,
)

WS = Workspace(-2.0, -4.0, 12.0, 4.0)


def empty_world():
    return World(WS, (), robot_diameter=0.4)


def episode(world, start=RobotState(0, 0, 0), goal=(10.0, 0.0), radius=0.4, limit=30.0):
    return make_episode(world, start, goal, radius, limit)


# --- geometry primitives ---


def test_ray_rect_hit_distance():
    rect = RectObstacle(2.0, -1.0, 3.0, 1.0)
    enter, exit_ = ray_rect_intersections(np.zeros(2), np.array([[1.0, 0.0]]), rect)
    assert enter[0] == pytest.approx(2.0)
    assert exit_[0] == pytest.approx(3.0)


def test_ray_rect_miss():
    rect = RectObstacle(2.0, 0.5, 3.0, 1.0)
    enter, exit_ = ray_rect_intersections(np.zeros(2), np.array([[1.0, 0.0]]), rect)
    assert enter[0] > exit_[0]


def test_ray_circle_hit():
    circ = CircleObstacle(3.0, 0.0, 0.5)
    enter, _ = ray_circle_intersections(np.zeros(2), np.array([[1.0, 0.0]]), circ)
    assert enter[0] == pytest.approx(2.5)


def test_point_and_distance_helpers():
    rect = RectObstacle(1.0, 1.0, 2.0, 2.0)
    assert points_in_obstacle(np.array([[1.5, 1.5]]), rect)[0]
    assert distance_to_obstacle((0.0, 1.5), rect) == pytest.approx(1.0)
    circ = CircleObstacle(0.0, 0.0, 1.0)
    assert distance_to_obstacle((2.0, 0.0), circ) == pytest.approx(1.0)


def test_scripted_obstacle_moves_along_waypoints():
    circ = CircleObstacle(0.0, 0.0, 0.3, waypoints=((0.0, 0.0), (2.0, 0.0)), speed=1.0)
    at1 = obstacle_at_time(circ, 1.0)
    assert at1.cx == pytest.approx(1.0)
    at3 = obstacle_at_time(circ, 3.0)  # loop: 0->2 then back toward 0
    assert at3.cx == pytest.approx(1.0)


# --- advance ---


def test_advance_free_space():
    world = empty_world()
    ep = episode(world)
    out = advance(ep, world, ControlInput(1.0, 0.0), 0.1)
    assert out.robot.x == pytest.approx(0.1)
    assert out.collision_count == 0
    assert out.done is Outcome.RUNNING


def test_advance_wall_contact_counts_once():
    world = World(WS, (RectObstacle(1.0, -1.0, 1.5, 1.0),), robot_diameter=0.4)
    ep = episode(world)
    for _ in range(40):
        ep = advance(ep, world, ControlInput(1.0, 0.0), 0.25)
    assert ep.collision_count == 1
    assert ep.robot.x <= 1.0 - 0.2 + 1e-9


def test_advance_reaches_goal():
    world = empty_world()
    ep = episode(world, goal=(1.0, 0.0), radius=0.3)
    for _ in range(10):
        ep = advance(ep, world, ControlInput(1.0, 0.0), 0.25)
        if ep.done is not Outcome.RUNNING:
            break
    assert ep.done is Outcome.SUCCESS


def test_advance_timeout():
    world = empty_world()
    ep = episode(world, limit=1.0)
    for _ in range(6):
        if ep.done is not Outcome.RUNNING:
            break
        ep = advance(ep, world, ControlInput(0.0, 0.0), 0.25)
    assert ep.done is Outcome.TIMEOUT


def test_advance_rejects_terminal_episode():
    world = empty_world()
    ep = mark_aborted(episode(world))
    with pytest.raises(ValueError):
        advance(ep, world, ControlInput(0, 0), 0.1)
    with pytest.raises(ValueError):
        mark_aborted(ep)


def test_start_inside_obstacle_rejected():
    world = World(WS, (RectObstacle(-0.5, -0.5, 0.5, 0.5),), robot_diameter=0.4)
    with pytest.raises(ValueError):
        episode(world)


def test_no_tunneling_under_fuzz():
    world = World(
        WS,
        (RectObstacle(0.8, -2.0, 1.2, 2.0), CircleObstacle(-1.0, 0.0, 0.4)),
        robot_diameter=0.4,
    )
    rng = np.random.default_rng(4)
    ep = episode(world, start=RobotState(0, 0, 0), limit=1e9)
    for _ in range(300):
        cmd = ControlInput(float(rng.uniform(0, 1)), float(rng.uniform(-1.5, 1.5)))
        ep = advance(ep, world, cmd, 0.25)
        for obs in world.obstacles:
            # disc may touch but never meaningfully penetrate
            assert distance_to_obstacle((ep.robot.x, ep.robot.y), obs) > 0.2 - 0.025


# --- depth rendering ---


def test_render_empty_world_ground_profile():
    cam = CameraModel()
    world = empty_world()
    depth = render_depth(world, RobotState(0, 0, 0), cam)
    assert depth.shape == (cam.rows, cam.cols)
    assert depth.min() >= 0.0 and depth.max() <= 1.0
    center = depth[:, cam.cols // 2]
    # pitched-down camera sees ground: depth decreases toward the image bottom
    assert np.all(np.diff(center) <= 1e-9)


def test_render_wall_center_column_depth():
    # tall wall 2 m ahead spanning the FOV, flat-view camera; the wall
    # occupies every row down to its base; nearer ground shows below it
    cam = CameraModel(pitch=0.0, max_range=8.0)
    world = World(WS, (RectObstacle(2.0, -6.0, 2.5, 6.0, height=50.0),), robot_diameter=0.4)
    depth = render_depth(world, RobotState(0, 0, 0), cam)
    col = depth[:, int(cam.cx)]
    base_row = int(cam.cy + cam.fy * cam.height / 2.0)
    assert np.allclose(col[: base_row + 1], 2.0 / cam.max_range, atol=1e-6)
    assert np.all(col[base_row + 1 :] < 2.0 / cam.max_range)


def test_render_half_fov_wall_leaves_other_side():
    cam = CameraModel(pitch=0.0)
    wall = RectObstacle(2.0, 0.1, 2.5, 6.0, height=50.0)  # left half only
    world = World(WS, (wall,), robot_diameter=0.4)
    base = render_depth(empty_world(), RobotState(0, 0, 0), cam)
    got = render_depth(world, RobotState(0, 0, 0), cam)
    right = slice(int(cam.cx) + 3, None)  # columns looking right (y < 0)
    assert np.array_equal(got[:, right], base[:, right])


def test_render_monotone_on_approach():
    cam = CameraModel()
    world = World(WS, (RectObstacle(2.0, -4.0, 2.5, 4.0, height=1.0),), robot_diameter=0.4)
    base = render_depth(empty_world(), RobotState(0, 0, 0), cam)
    far = render_depth(world, RobotState(0, 0, 0), cam)
    near = render_depth(world, RobotState(0.5, 0, 0), cam)
    c = int(cam.cx)
    wall_rows = (np.abs(far[:, c] - base[:, c]) > 1e-6) & (np.abs(near[:, c] - base[:, c]) > 1e-6)
    assert wall_rows.any()
    assert np.all(near[wall_rows, c] < far[wall_rows, c])


def test_render_sees_over_low_obstacle():
    cam = CameraModel()
    world = World(WS, (RectObstacle(1.2, -0.4, 1.6, 0.4, height=0.25),), robot_diameter=0.4)
    depth = render_depth(world, RobotState(0, 0, 0), cam)
    base = render_depth(empty_world(), RobotState(0, 0, 0), cam)
    c = int(cam.cx)
    diff = np.abs(depth[:, c] - base[:, c])
    rows_blocked = np.where(diff > 1e-6)[0]
    assert rows_blocked.size > 0
    assert rows_blocked.min() > 0  # top image rows still show far ground


# --- guidance providers ---


def test_straight_line_guidance_spacing():
    spec = GuidanceSpec(kind="straight_line", k_points=8, spacing=0.5)
    world = empty_world()
    goal = (4.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    traj = guidance(provider, ep, world, goal)
    want = np.stack([0.5 * np.arange(1, 9), np.zeros(8)], axis=1)
    assert np.allclose(traj.points, want)


def test_straight_line_goal_behind():
    spec = GuidanceSpec(kind="straight_line", k_points=5, spacing=0.5)
    world = empty_world()
    goal = (-3.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    traj = guidance(provider, ep, world, goal)
    assert traj.points[0, 0] < 0.0


def test_straight_line_caps_at_goal():
    spec = GuidanceSpec(kind="straight_line", k_points=8, spacing=0.5)
    world = empty_world()
    goal = (1.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    traj = guidance(provider, ep, world, goal)
    assert traj.points[-1, 0] == pytest.approx(1.0)
    assert np.all(traj.points[:, 0] <= 1.0 + 1e-9)


def test_replay_guidance_repeats_final_point(tmp_path):
    path = tmp_path / "route.txt"
    path.write_text("0.0 0.0\n0.5 0.0\n1.0 0.0\n")
    pts = load_replay_path(path)
    assert pts.shape == (3, 2)
    spec = GuidanceSpec(kind="replay", k_points=6, replay_path=str(path))
    world = empty_world()
    provider = GuidanceProvider(spec, world, (10.0, 0.0))
    ep = episode(world, start=RobotState(0.9, 0.0, 0.0))
    traj = guidance(provider, ep, world, (10.0, 0.0))
    assert np.allclose(traj.points[-1], traj.points[-2])  # exhausted -> repeat


def test_planner_true_map_avoids_obstacles():
    wall = RectObstacle(3.0, -2.0, 3.4, 2.5)
    world = World(WS, (wall,), robot_diameter=0.4)
    spec = GuidanceSpec(kind="planner", k_points=9, spacing=0.3, stale_map=False)
    goal = (6.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    pose = ep.robot
    traj = guidance(provider, ep, world, goal)
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    world_pts = np.stack(
        [pose.x + ct * traj.points[:, 0] - st * traj.points[:, 1],
         pose.y + st * traj.points[:, 0] + ct * traj.points[:, 1]], axis=1
    )
    assert not points_in_obstacle(world_pts, wall).any()


def test_planner_stale_map_ignores_unseen_obstacles():
    blocker = RectObstacle(3.0, -2.0, 3.4, 2.0, unseen=True)
    world = World(Workspace(-1.0, -2.0, 8.0, 2.0), (blocker,), robot_diameter=0.4)
    spec = GuidanceSpec(kind="planner", k_points=12, spacing=0.3, stale_map=True)
    goal = (6.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    traj = guidance(provider, ep, world, goal)
    # by construction the stale path runs straight through the blocker
    world_pts = traj.points + np.array([ep.robot.x, ep.robot.y])
    assert points_in_obstacle(world_pts, blocker).any()


def test_planner_unreachable_falls_back_to_straight_line():
    cage = [
        RectObstacle(1.0, -2.0, 1.3, 2.0),
        RectObstacle(-1.5, -2.0, -1.2, 2.0),
        RectObstacle(-1.5, 1.7, 1.3, 2.0),
        RectObstacle(-1.5, -2.0, 1.3, -1.7),
    ]
    world = World(WS, tuple(cage), robot_diameter=0.4)
    spec = GuidanceSpec(kind="planner", k_points=6, spacing=0.4, stale_map=False)
    goal = (8.0, 0.0)
    provider = GuidanceProvider(spec, world, goal)
    ep = episode(world, goal=goal)
    traj = guidance(provider, ep, world, goal)
    want = np.stack([0.4 * np.arange(1, 7), np.zeros(6)], axis=1)
    assert np.allclose(traj.points, want)


def test_episode_trace_deterministic():
    world = World(WS, (RectObstacle(2.0, -0.5, 2.5, 0.5),), robot_diameter=0.4)
    rng_cmds = [(0.7, 0.2), (0.9, -0.4), (1.0, 0.0), (0.3, 1.0)] * 10
    def run():
        ep = episode(world, limit=1e9)
        states = []
        for v, om in rng_cmds:
            ep = advance(ep, world, ControlInput(v, om), 0.25)
            states.append((ep.robot.x, ep.robot.y, ep.robot.theta, ep.collision_count))
        return states
    assert run() == run()
