import math

import numpy as np
import pytest

from safenav.domain import MpcConfig, RobotState, Trajectory
from safenav.mpc import (
    ReferencePath,
    cost_gradient,
    derive_reference_headings,
    rollout,
    shooting_cost,
    shift_warm_start,
    solve,
    solve_with_trace,
    step,
)


def finite_difference_gradient(x0, u, ref, cfg, h=1e-5):
    grad = np.zeros_like(u)
    for k in range(u.shape[0]):
        for j in range(2):
            up = u.copy()
            up[k, j] += h
            dn = u.copy()
            dn[k, j] -= h
            grad[k, j] = (shooting_cost(x0, up, ref, cfg) - shooting_cost(x0, dn, ref, cfg)) / (2 * h)
    return grad


def random_instance(rng, k):
    cfg = MpcConfig(horizon=k, dt=0.2)
    x0 = RobotState(rng.normal(), rng.normal(), rng.uniform(-2.5, 2.5))
    u = np.stack(
        [rng.uniform(cfg.v_min, cfg.v_max, size=k), rng.uniform(-cfg.omega_max, cfg.omega_max, size=k)],
        axis=1,
    )
    # reference near a perturbed rollout keeps heading residuals off the wrap
    base = rollout(x0, u, cfg.dt)
    ref = base + rng.normal(scale=0.1, size=base.shape)
    return cfg, x0, u, ReferencePath(ref)


# --- reference headings ---


def test_headings_straight_x():
    ref = derive_reference_headings(Trajectory([[0, 0], [1, 0], [2, 0]]))
    assert np.allclose(ref.states[:, 2], 0.0)


def test_headings_straight_y():
    ref = derive_reference_headings(Trajectory([[0, 0], [0, 1]]))
    assert np.allclose(ref.states[:, 2], math.pi / 2)


def test_headings_diagonal():
    ref = derive_reference_headings(Trajectory([[0, 0], [1, 1]]))
    assert ref.states[0, 2] == pytest.approx(math.pi / 4)


def test_headings_zero_segment_inherits():
    ref = derive_reference_headings(Trajectory([[0, 0], [0, 1], [0, 1]]))
    assert np.allclose(ref.states[:, 2], math.pi / 2)


# --- rollout ---


def test_rollout_single_forward_step():
    states = rollout(RobotState(0, 0, 0), np.array([[1.0, 0.0]]), dt=0.1)
    assert np.allclose(states[1], [0.1, 0.0, 0.0])


def test_rollout_pure_rotation():
    states = rollout(RobotState(0, 0, 0), np.array([[0.0, math.pi]]), dt=0.5)
    assert np.allclose(states[1], [0.0, 0.0, math.pi / 2])


def test_rollout_ten_steps_straight():
    u = np.tile([1.0, 0.0], (10, 1))
    states = rollout(RobotState(0, 0, 0), u, dt=0.1)
    assert np.allclose(states[-1], [1.0, 0.0, 0.0], atol=1e-12)


def test_rollout_heading_fixed_without_omega():
    rng = np.random.default_rng(0)
    u = np.stack([rng.uniform(0, 1, 12), np.zeros(12)], axis=1)
    states = rollout(RobotState(0, 0, 0.3), u, dt=0.25)
    assert np.allclose(states[:, 2], 0.3)


def test_rollout_position_fixed_without_v():
    rng = np.random.default_rng(1)
    u = np.stack([np.zeros(12), rng.uniform(-1, 1, 12)], axis=1)
    states = rollout(RobotState(0.5, -0.5, 0), u, dt=0.25)
    assert np.allclose(states[:, :2], [0.5, -0.5])


def test_rollout_path_length_matches_speed():
    rng = np.random.default_rng(2)
    u = np.stack([rng.uniform(0, 1, 15), rng.uniform(-1.5, 1.5, 15)], axis=1)
    dt = 0.25
    states = rollout(RobotState(0, 0, 0), u, dt)
    seg = np.diff(states[:, :2], axis=0)
    length = np.hypot(seg[:, 0], seg[:, 1]).sum()
    assert length == pytest.approx(np.abs(u[:, 0]).sum() * dt, abs=1e-12)


# --- shooting cost ---


def test_cost_zero_when_matching_reference():
    cfg = MpcConfig(horizon=5, control_weight=(0.0, 0.0))
    x0 = RobotState(0, 0, 0)
    u = np.tile([0.5, 0.2], (5, 1))
    ref = ReferencePath(rollout(x0, u, cfg.dt))
    assert shooting_cost(x0, u, ref, cfg) == pytest.approx(0.0, abs=1e-18)


def test_cost_zero_stationary():
    cfg = MpcConfig(horizon=3)
    x0 = RobotState(0, 0, 0)
    u = np.zeros((3, 2))
    ref = ReferencePath(np.zeros((4, 3)))
    assert shooting_cost(x0, u, ref, cfg) == pytest.approx(0.0)


def test_cost_hand_example():
    cfg = MpcConfig(
        horizon=1,
        state_weight=(1, 1, 1),
        terminal_weight=(1, 1, 1),
        control_weight=(0, 0),
    )
    x0 = RobotState(0, 0, 0)
    ref = ReferencePath(np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    assert shooting_cost(x0, np.zeros((1, 2)), ref, cfg) == pytest.approx(2.0)


# --- gradient ---


def test_gradient_zero_at_exact_tracking():
    cfg = MpcConfig(horizon=6, control_weight=(0.0, 0.0))
    x0 = RobotState(0, 0, 0)
    u = np.tile([0.4, -0.3], (6, 1))
    ref = ReferencePath(rollout(x0, u, cfg.dt))
    g = cost_gradient(x0, u, ref, cfg)
    assert np.abs(g).max() <= 1e-8


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(100):
        k = int(rng.integers(1, 21))
        cfg, x0, u, ref = random_instance(rng, k)
        g = cost_gradient(x0, u, ref, cfg)
        fd = finite_difference_gradient(x0, u, ref, cfg)
        denom = max(np.abs(fd).max(), 1e-8)
        rel = np.abs(g - fd).max() / denom
        assert rel <= 1e-4, f"gradient mismatch rel={rel:.2e}"


def test_gradient_control_penalty_term():
    cfg = MpcConfig(horizon=4, control_weight=(0.3, 0.7), state_weight=(1, 1, 1))
    x0 = RobotState(0, 0, 0)
    rng = np.random.default_rng(3)
    u = np.stack([rng.uniform(0.1, 0.9, 4), rng.uniform(-1, 1, 4)], axis=1)
    ref = ReferencePath(rollout(x0, u, cfg.dt))
    g = cost_gradient(x0, u, ref, cfg)
    want = 2.0 * np.array(cfg.control_weight)[None, :] * u
    assert np.allclose(g, want, atol=1e-10)


def test_gradient_with_workspace_penalty_matches_fd():
    cfg = MpcConfig(
        horizon=6,
        workspace_bounds=(-0.2, -0.2, 0.5, 0.2),
        workspace_penalty=3.0,
    )
    x0 = RobotState(0, 0, 0)
    rng = np.random.default_rng(8)
    u = np.stack([rng.uniform(0.3, 1.0, 6), rng.uniform(-1, 1, 6)], axis=1)
    ref = ReferencePath(rollout(x0, u * 0.5, cfg.dt))
    g = cost_gradient(x0, u, ref, cfg)
    fd = finite_difference_gradient(x0, u, ref, cfg)
    assert np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-8) <= 1e-4


# --- solve ---


def test_solve_stationary_reference():
    cfg = MpcConfig(horizon=6)
    x0 = RobotState(0, 0, 0)
    ref = ReferencePath(np.zeros((7, 3)))
    u = solve(x0, ref, None, cfg)
    assert np.abs(u).max() <= 1e-3
    assert shooting_cost(x0, u, ref, cfg) <= 1e-6


def test_solve_recovers_constant_controls():
    # with R = 0 the generating sequence is the exact optimum
    cfg = MpcConfig(horizon=8, solver_iters=80, control_weight=(0.0, 0.0))
    x0 = RobotState(0, 0, 0)
    gen = np.tile([0.5, 0.0], (8, 1))
    ref = ReferencePath(rollout(x0, gen, cfg.dt))
    u = solve(x0, ref, None, cfg)
    assert np.abs(u - gen).max() <= 0.05


def test_solve_clamps_to_speed_limit():
    cfg = MpcConfig(horizon=5)
    x0 = RobotState(0, 0, 0)
    demand = np.tile([2.0 * cfg.v_max, 0.0], (5, 1))
    ref = ReferencePath(rollout(x0, demand, cfg.dt))
    u = solve(x0, ref, None, cfg)
    assert np.all(u[:, 0] == cfg.v_max)


def test_solve_never_increases_cost_and_respects_box():
    rng = np.random.default_rng(12)
    for _ in range(25):
        k = int(rng.integers(1, 12))
        cfg, x0, u0, ref = random_instance(rng, k)
        warm = np.stack(
            [rng.uniform(-0.5, 2.0, k), rng.uniform(-3.0, 3.0, k)], axis=1
        )
        u, trace = solve_with_trace(x0, ref, warm, cfg)
        assert trace[-1] <= trace[0] + 1e-12
        assert np.all(u[:, 0] >= cfg.v_min) and np.all(u[:, 0] <= cfg.v_max)
        assert np.all(np.abs(u[:, 1]) <= cfg.omega_max)


def test_warm_start_needs_fewer_iterations():
    cfg = MpcConfig(horizon=8, solver_iters=60)
    x0 = RobotState(0, 0, 0)
    gen = np.tile([0.6, 0.4], (8, 1))
    ref = ReferencePath(rollout(x0, gen, cfg.dt))
    u_cold, trace_cold = solve_with_trace(x0, ref, None, cfg)
    warm = shift_warm_start(np.vstack([gen[:1], gen[:-1]]), 8)
    _, trace_warm = solve_with_trace(x0, ref, warm, cfg)
    target = max(trace_cold[-1], trace_warm[-1]) + 1e-12
    iters_cold = next(i for i, c in enumerate(trace_cold) if c <= target)
    iters_warm = next(i for i, c in enumerate(trace_warm) if c <= target)
    assert iters_warm <= iters_cold


# --- step ---


def test_step_straight_line_ahead():
    cfg = MpcConfig()
    pts = np.stack([0.2 * np.arange(1, 10), np.zeros(9)], axis=1)
    cmd, u = step(RobotState(0, 0, 0), Trajectory(pts), None, cfg)
    assert cmd.v > 0.0
    assert abs(cmd.omega) <= 0.1
    assert u.shape == (cfg.horizon, 2)


def test_step_at_goal_stays_put():
    cfg = MpcConfig()
    pts = np.zeros((9, 2))
    cmd, _ = step(RobotState(0, 0, 0), Trajectory(pts), None, cfg)
    assert abs(cmd.v) <= 1e-3
    assert abs(cmd.omega) <= 1e-3


def test_step_rejects_short_trajectory():
    with pytest.raises(ValueError):
        Trajectory([[0.0, 0.0]])


def test_shift_warm_start_shapes():
    u = np.arange(8.0).reshape(4, 2)
    out = shift_warm_start(u, 4)
    assert np.array_equal(out[0], u[1])
    assert np.array_equal(out[-1], u[-1])
    assert shift_warm_start(None, 4) is None
    longer = shift_warm_start(u, 6)
    assert longer.shape == (6, 2)


def test_closed_loop_straight_tracking_rms():
    """Follow a straight 3 m reference at 0.5 m/s with default gains."""
    cfg = MpcConfig()
    spacing = 0.5 * cfg.dt
    n_ref = int(3.0 / spacing) + 1
    path = np.stack([spacing * np.arange(n_ref), np.zeros(n_ref)], axis=1)
    state = RobotState(0, 0, 0)
    warm = None
    errors = []
    for t in range(n_ref - 1):
        window = path[t : t + cfg.horizon + 1]
        if window.shape[0] < 2:
            break
        cmd, warm = step(state, Trajectory(window), warm, cfg)
        nxt = rollout(state, np.array([[cmd.v, cmd.omega]]), cfg.dt)[1]
        state = RobotState(*nxt)
        errors.append(math.hypot(state.x - path[t + 1, 0], state.y - path[t + 1, 1]))
    rms = math.sqrt(np.mean(np.square(errors)))
    assert rms <= 0.05, f"closed-loop RMS {rms:.3f} m"
