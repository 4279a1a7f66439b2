"""Safety-constrained trajectory refinement and navigation benchmarks."""

from .domain import (
    CameraModel,
    CircleObstacle,
    ControlInput,
    GroundScoreGrid,
    GuidanceSpec,
    MpcConfig,
    OptimizerConfig,
    RectObstacle,
    RobotState,
    ScenarioConfig,
    ScoreGridSpec,
    Trajectory,
    Workspace,
    grid_lookup,
    grid_lookup_many,
    normalize_angle,
)
from .stein_es import OptimizationResult, optimize
from .supervisor import Mode, RotateDirection, SupervisorConfig, SupervisorDecision
from .traversability import TsmConfig, depth_to_ground_scores, score_from_occupancy

__all__ = [
    "CameraModel",
    "CircleObstacle",
    "ControlInput",
    "GroundScoreGrid",
    "GuidanceSpec",
    "Mode",
    "MpcConfig",
    "OptimizationResult",
    "OptimizerConfig",
    "RectObstacle",
    "RobotState",
    "RotateDirection",
    "ScenarioConfig",
    "ScoreGridSpec",
    "SupervisorConfig",
    "SupervisorDecision",
    "Trajectory",
    "TsmConfig",
    "Workspace",
    "depth_to_ground_scores",
    "grid_lookup",
    "grid_lookup_many",
    "normalize_angle",
    "optimize",
    "score_from_occupancy",
]

__version__ = "0.1.0"
