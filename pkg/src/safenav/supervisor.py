"""Per-step control policy: refine guidance, track it, or rotate to safety.

Each step runs the scaling optimizer on the latest guidance and score
grid. A feasible refinement is re-checked against the tube constraint and
tracked by the controller; an infeasible one stops the robot and rotates
it toward the side holding more free space. With the emergency behavior
disabled (ablation), infeasible steps track the raw guidance instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import mpc, stein_es
from .domain import (
    ControlInput,
    GroundScoreGrid,
    MpcConfig,
    OptimizerConfig,
    RobotState,
    Trajectory,
)


class Mode(str, Enum):
    TRACK = "TRACK"
    EMERGENCY_ROTATE = "EMERGENCY_ROTATE"


class RotateDirection(str, Enum):
    LEFT = "LEFT"
    RIGHT = "RIGHT"


@dataclass(frozen=True)
class SupervisorConfig:
    emergency_omega: float = 0.9
    max_emergency_steps: int = 40
    free_mass_margin: float = 1e-9
    emergency_enabled: bool = True

    def __post_init__(self):
        if self.emergency_omega <= 0:
            raise ValueError("emergency_omega must be positive")


@dataclass(frozen=True)
class SupervisorDecision:
    mode: Mode
    command: ControlInput
    refined: Optional[stein_es.OptimizationResult]
    rotate_direction: Optional[RotateDirection]
    warm: Optional[np.ndarray]  # controller warm start for the next step
    safety_rechecked: bool  # independent tube re-check passed (TRACK on refined)


def emergency_direction(grid: GroundScoreGrid, margin: float = 1e-9) -> RotateDirection:
    """Side (robot frame) holding the larger clamped free-space mass.

    Mass sums max(0, -score) over cells strictly left (y > 0) or right
    (y < 0) of the robot axis; ties within ``margin`` break LEFT.
    """
    ys = grid.origin[1] + grid.resolution * np.arange(grid.cols)
    free = np.maximum(0.0, -grid.values)
    left_mass = float(free[:, ys > 0.0].sum())
    right_mass = float(free[:, ys < 0.0].sum())
    if right_mass > left_mass + margin:
        return RotateDirection.RIGHT
    return RotateDirection.LEFT


def step(
    state: RobotState,
    guidance: Trajectory,
    grid: GroundScoreGrid,
    warm: Optional[np.ndarray],
    opt_cfg: OptimizerConfig,
    mpc_cfg: MpcConfig,
    sup_cfg: SupervisorConfig,
    seed: int,
    emergency_latch: Optional[RotateDirection] = None,
) -> SupervisorDecision:
    """One decision step; deterministic for a given seed.

    ``emergency_latch`` is the rotation direction of an ongoing emergency
    bout (the caller passes back the previous decision's direction). The
    free-mass comparison picks a direction only when a bout starts;
    re-evaluating it mid-rotation oscillates in near-symmetric scenes.
    """
    result = stein_es.optimize(guidance, grid, opt_cfg, seed)

    if result.feasible:
        # Independent gate: never track a trajectory that fails the tube
        # constraint when re-evaluated outside the optimizer.
        rechecked = stein_es.tube_feasible(result.best_scaling, grid, guidance, opt_cfg)
        if rechecked:
            cmd, new_warm = mpc.step(state, result.trajectory, warm, mpc_cfg)
            return SupervisorDecision(
                mode=Mode.TRACK,
                command=cmd,
                refined=result,
                rotate_direction=None,
                warm=new_warm,
                safety_rechecked=True,
            )
        result = stein_es.OptimizationResult(
            best_scaling=(1.0, 1.0),
            trajectory=guidance,
            cost=float("inf"),
            feasible=False,
            iterations_used=result.iterations_used,
            cost_trace=result.cost_trace,
            final_means=result.final_means,
        )

    if not sup_cfg.emergency_enabled:
        # Ablation: execute the raw guidance when refinement fails.
        cmd, new_warm = mpc.step(state, guidance, warm, mpc_cfg)
        return SupervisorDecision(
            mode=Mode.TRACK,
            command=cmd,
            refined=None,
            rotate_direction=None,
            warm=new_warm,
            safety_rechecked=False,
        )

    direction = emergency_latch or emergency_direction(grid, sup_cfg.free_mass_margin)
    omega = sup_cfg.emergency_omega if direction is RotateDirection.LEFT else -sup_cfg.emergency_omega
    return SupervisorDecision(
        mode=Mode.EMERGENCY_ROTATE,
        command=ControlInput(0.0, omega),
        refined=result,
        rotate_direction=direction,
        warm=None,
        safety_rechecked=False,
    )
