import numpy as np
import pytest

from safenav.domain import (
    GroundScoreGrid,
    MpcConfig,
    OptimizerConfig,
    RobotState,
    Trajectory,
)
from safenav.supervisor import (
    Mode,
    RotateDirection,
    SupervisorConfig,
    SupervisorDecision,
    emergency_direction,
    step,
)


def grid_from(values, resolution=0.2, origin=(-2.0, -2.0)):
    return GroundScoreGrid(np.asarray(values, dtype=float), resolution, origin)


def half_grid(left_value, right_value, rows=20, cols=21, resolution=0.2):
    # columns map to y: origin y=-2 -> y=0 at the middle column
    vals = np.zeros((rows, cols))
    mid = cols // 2
    vals[:, mid + 1 :] = left_value  # y > 0 is the left side
    vals[:, :mid] = right_value
    return grid_from(vals, resolution)


def straight_guidance(k=9, spacing=0.22):
    xs = spacing * np.arange(1, k + 1)
    return Trajectory(np.stack([xs, np.zeros(k)], axis=1))


def test_emergency_direction_free_left():
    assert emergency_direction(half_grid(-1.0, 1.0)) is RotateDirection.LEFT


def test_emergency_direction_mirror_right():
    assert emergency_direction(half_grid(1.0, -1.0)) is RotateDirection.RIGHT


def test_emergency_direction_mass_comparison():
    vals = np.zeros((10, 11))
    vals[:, 6:] = -1.0  # left mass 10*5 = 50
    vals[:5, :5] = -1.0  # right mass 25
    g = grid_from(vals, origin=(-2.0, -1.0))  # y = 0 at the middle column
    assert emergency_direction(g) is RotateDirection.LEFT


def test_emergency_direction_tie_breaks_left():
    assert emergency_direction(half_grid(-0.5, -0.5)) is RotateDirection.LEFT


def default_cfgs(**sup_kwargs):
    return (
        OptimizerConfig(safety_threshold=-0.3),
        MpcConfig(),
        SupervisorConfig(**sup_kwargs),
    )


def test_step_tracks_in_open_space():
    opt, mpc_cfg, sup = default_cfgs()
    grid = grid_from(np.full((30, 31), -1.0))
    dec = step(RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=3)
    assert dec.mode is Mode.TRACK
    assert dec.refined is not None and dec.refined.feasible
    assert dec.safety_rechecked
    assert dec.command.v > 0.0
    assert dec.warm is not None


def blocked_grid_with_left_pocket():
    # everything mildly unsafe; a free pocket far on the left side, away
    # from the forward tube
    vals = np.full((30, 31), 0.5)
    vals[:, 26:] = -1.0
    g = grid_from(vals, resolution=0.2, origin=(-3.0, -3.0))
    return g


def test_step_emergency_on_blocked_grid():
    opt, mpc_cfg, sup = default_cfgs()
    grid = blocked_grid_with_left_pocket()
    dec = step(RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=5)
    assert dec.mode is Mode.EMERGENCY_ROTATE
    assert dec.command.v == 0.0
    assert dec.rotate_direction is RotateDirection.LEFT
    assert dec.command.omega == pytest.approx(sup.emergency_omega)
    assert dec.refined is not None and not dec.refined.feasible


def test_step_emergency_respects_latch():
    opt, mpc_cfg, sup = default_cfgs()
    grid = blocked_grid_with_left_pocket()
    dec = step(
        RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=5,
        emergency_latch=RotateDirection.RIGHT,
    )
    assert dec.mode is Mode.EMERGENCY_ROTATE
    assert dec.rotate_direction is RotateDirection.RIGHT
    assert dec.command.omega == pytest.approx(-sup.emergency_omega)


def test_step_recovers_after_rotation():
    """Scripted two-step scenario: blocked view, then open view."""
    opt, mpc_cfg, sup = default_cfgs()
    blocked = blocked_grid_with_left_pocket()
    first = step(RobotState(0, 0, 0), straight_guidance(), blocked, None, opt, mpc_cfg, sup, seed=7)
    assert first.mode is Mode.EMERGENCY_ROTATE
    open_grid = grid_from(np.full((30, 31), -1.0))
    second = step(RobotState(0, 0, 0), straight_guidance(), open_grid, first.warm, opt, mpc_cfg, sup, seed=8)
    assert second.mode is Mode.TRACK
    assert second.command.v > 0.0


def test_step_without_emergency_tracks_raw_guidance():
    opt, mpc_cfg, sup = default_cfgs(emergency_enabled=False)
    grid = blocked_grid_with_left_pocket()
    dec = step(RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=5)
    assert dec.mode is Mode.TRACK
    assert dec.refined is None  # raw guidance executed, no refinement claimed
    assert not dec.safety_rechecked


def test_step_deterministic():
    opt, mpc_cfg, sup = default_cfgs()
    grid = grid_from(np.full((30, 31), -1.0))
    a = step(RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=11)
    b = step(RobotState(0, 0, 0), straight_guidance(), grid, None, opt, mpc_cfg, sup, seed=11)
    assert a.mode == b.mode
    assert a.command == b.command
    assert np.array_equal(a.warm, b.warm)


def test_supervisor_config_validation():
    with pytest.raises(ValueError):
        SupervisorConfig(emergency_omega=0.0)
