"""Trajectory-tracking controller for unicycle kinematics.

Shooting formulation over a short horizon: forward-integrate the kinematic
model under a candidate control sequence, penalize deviation from the
reference states plus control effort, and descend the exact adjoint
gradient with backtracking projected steps. Control boxes are enforced by
clamping after every step, so every returned sequence is feasible.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .domain import ControlInput, MpcConfig, RobotState, Trajectory, normalize_angle


class ReferencePath:
    """Reference states (x, y, theta) the controller tracks. Immutable."""

    __slots__ = ("states",)

    def __init__(self, states: np.ndarray):
        arr = np.asarray(states, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise ValueError(f"expected (N, 3) reference states, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("reference states must be finite")
        arr = arr.copy()
        arr[:, 2] = [normalize_angle(t) for t in arr[:, 2]]
        arr.setflags(write=False)
        self.states = arr

    def __len__(self) -> int:
        return self.states.shape[0]


def derive_reference_headings(traj: Trajectory) -> ReferencePath:
    """Attach headings from forward differences of the waypoint positions."""
    pts = traj.points
    k = pts.shape[0]
    states = np.zeros((k, 3))
    states[:, :2] = pts
    heading = 0.0
    for i in range(k - 1):
        d = pts[i + 1] - pts[i]
        if math.hypot(d[0], d[1]) > 1e-12:
            heading = math.atan2(d[1], d[0])
        states[i, 2] = heading
    states[k - 1, 2] = states[k - 2, 2]
    return ReferencePath(states)


def rollout(x0: RobotState, u: np.ndarray, dt: float) -> np.ndarray:
    """Integrate the unicycle recursion; returns (K+1, 3) states incl. x0."""
    u = np.asarray(u, dtype=np.float64)
    states = np.zeros((u.shape[0] + 1, 3))
    states[0] = (x0.x, x0.y, x0.theta)
    for k in range(u.shape[0]):
        x, y, th = states[k]
        v, om = u[k]
        states[k + 1, 0] = x + v * math.cos(th) * dt
        states[k + 1, 1] = y + v * math.sin(th) * dt
        states[k + 1, 2] = normalize_angle(th + om * dt)
    return states


def _residuals(states: np.ndarray, ref: ReferencePath) -> np.ndarray:
    res = states - ref.states
    res[:, 2] = [normalize_angle(t) for t in res[:, 2]]
    return res


def _workspace_excess(states: np.ndarray, cfg: MpcConfig) -> np.ndarray:
    """Per-state (ex, ey) signed overshoot beyond the workspace box."""
    x_min, y_min, x_max, y_max = cfg.workspace_bounds
    ex = np.maximum(x_min - states[:, 0], 0.0) * -1.0 + np.maximum(states[:, 0] - x_max, 0.0)
    ey = np.maximum(y_min - states[:, 1], 0.0) * -1.0 + np.maximum(states[:, 1] - y_max, 0.0)
    return np.stack([ex, ey], axis=1)


def shooting_cost(x0: RobotState, u: np.ndarray, ref: ReferencePath, cfg: MpcConfig) -> float:
    """Stage state/control quadratics plus the terminal state quadratic."""
    u = np.asarray(u, dtype=np.float64)
    kh = u.shape[0]
    if len(ref) != kh + 1:
        raise ValueError(f"reference length {len(ref)} != horizon+1 ({kh + 1})")
    states = rollout(x0, u, cfg.dt)
    res = _residuals(states, ref)
    q = np.asarray(cfg.state_weight)
    r = np.asarray(cfg.control_weight)
    qf = np.asarray(cfg.terminal_weight)
    cost = ((res[:kh] ** 2) * q[None, :]).sum() + ((u**2) * r[None, :]).sum()
    cost += ((res[kh] ** 2) * qf).sum()
    if cfg.workspace_penalty > 0.0 and cfg.workspace_bounds is not None:
        cost += cfg.workspace_penalty * (_workspace_excess(states[1:], cfg) ** 2).sum()
    return float(cost)


def cost_gradient(x0: RobotState, u: np.ndarray, ref: ReferencePath, cfg: MpcConfig) -> np.ndarray:
    """Exact gradient of the shooting cost w.r.t. the (K, 2) controls.

    Reverse accumulation through the rollout recursion.
    """
    u = np.asarray(u, dtype=np.float64)
    kh = u.shape[0]
    if len(ref) != kh + 1:
        raise ValueError(f"reference length {len(ref)} != horizon+1 ({kh + 1})")
    states = rollout(x0, u, cfg.dt)
    res = _residuals(states, ref)
    q = np.asarray(cfg.state_weight)
    r = np.asarray(cfg.control_weight)
    qf = np.asarray(cfg.terminal_weight)
    penal = cfg.workspace_penalty if cfg.workspace_bounds is not None else 0.0
    excess = _workspace_excess(states, cfg) if penal > 0.0 else None

    grad = np.zeros_like(u)
    lam = 2.0 * qf * res[kh]
    if excess is not None:
        lam[:2] += 2.0 * penal * excess[kh]
    for k in range(kh - 1, -1, -1):
        v, _ = u[k]
        th = states[k, 2]
        dt = cfg.dt
        # B_k^T lam: rows are d(next state)/d(v, omega)
        grad[k, 0] = 2.0 * r[0] * u[k, 0] + (math.cos(th) * lam[0] + math.sin(th) * lam[1]) * dt
        grad[k, 1] = 2.0 * r[1] * u[k, 1] + lam[2] * dt
        # A_k^T lam plus the stage-cost contribution at step k
        new_lam = np.array(
            [
                lam[0],
                lam[1],
                (-v * math.sin(th) * lam[0] + v * math.cos(th) * lam[1]) * dt + lam[2],
            ]
        )
        if k > 0:
            new_lam += 2.0 * q * res[k]
            if excess is not None:
                new_lam[:2] += 2.0 * penal * excess[k]
        lam = new_lam
    return grad


def _clamp_controls(u: np.ndarray, cfg: MpcConfig) -> np.ndarray:
    out = np.asarray(u, dtype=np.float64).copy()
    out[:, 0] = np.clip(out[:, 0], cfg.v_min, cfg.v_max)
    out[:, 1] = np.clip(out[:, 1], -cfg.omega_max, cfg.omega_max)
    return out


def solve_with_trace(
    x0: RobotState,
    ref: ReferencePath,
    warm: Optional[np.ndarray],
    cfg: MpcConfig,
) -> tuple[np.ndarray, list[float]]:
    """Projected gradient descent; returns the controls and per-iteration costs."""
    kh = len(ref) - 1
    if kh < 1:
        raise ValueError("reference must hold at least 2 states")
    if warm is not None and warm.shape == (kh, 2):
        u = _clamp_controls(warm, cfg)
    else:
        u = _clamp_controls(np.zeros((kh, 2)), cfg)
    cost = shooting_cost(x0, u, ref, cfg)
    trace = [cost]
    for _ in range(cfg.solver_iters):
        grad = cost_gradient(x0, u, ref, cfg)
        gmax = float(np.abs(grad).max())
        if gmax < 1e-12:
            trace.append(cost)
            continue
        alpha = 1.0 / max(1.0, gmax)
        improved = False
        for _ in range(cfg.step_halvings + 1):
            cand = _clamp_controls(u - alpha * grad, cfg)
            cand_cost = shooting_cost(x0, cand, ref, cfg)
            if cand_cost < cost - 1e-15:
                u, cost, improved = cand, cand_cost, True
                break
            alpha *= 0.5
        trace.append(cost)
        if not improved:
            break
    return u, trace


def solve(
    x0: RobotState,
    ref: ReferencePath,
    warm: Optional[np.ndarray],
    cfg: MpcConfig,
) -> np.ndarray:
    """Best control sequence found; never worse than the starting sequence."""
    u, _ = solve_with_trace(x0, ref, warm, cfg)
    return u


def _window_reference(ref: ReferencePath, horizon: int) -> ReferencePath:
    n = min(len(ref), horizon + 1)
    return ReferencePath(ref.states[:n])


def shift_warm_start(u: Optional[np.ndarray], horizon: int) -> Optional[np.ndarray]:
    """Previous solution advanced one step, last input repeated."""
    if u is None or u.shape[0] == 0:
        return None
    shifted = np.vstack([u[1:], u[-1:]])
    if shifted.shape[0] > horizon:
        shifted = shifted[:horizon]
    while shifted.shape[0] < horizon:
        shifted = np.vstack([shifted, shifted[-1:]])
    return shifted


def step(
    x0: RobotState,
    x_opt: Trajectory,
    warm: Optional[np.ndarray],
    cfg: MpcConfig,
) -> tuple[ControlInput, np.ndarray]:
    """One control step: derive headings, solve, return the first input."""
    if len(x_opt) < 2:
        raise ValueError("tracking trajectory must hold at least 2 points")
    ref = _window_reference(derive_reference_headings(x_opt), cfg.horizon)
    horizon = len(ref) - 1
    u = solve(x0, ref, shift_warm_start(warm, horizon), cfg)
    return ControlInput(float(u[0, 0]), float(u[0, 1])), u
