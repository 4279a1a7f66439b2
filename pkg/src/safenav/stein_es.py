"""Guidance-trajectory refinement via a kernel-repulsed evolution strategy.

Searches diagonal per-axis scalings W = diag(w_x, w_y) of a guidance
trajectory. Each particle is a Gaussian search distribution over (w_x, w_y)
updated by softmax-weighted recombination of sampled scalings, plus an RBF
repulsion term between particle means that keeps the population spread over
distinct modes. Feasibility is a tube constraint: the score field sampled
across the robot-width band around every trajectory point must stay at or
below the safety threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import GroundScoreGrid, OptimizerConfig, Trajectory, grid_lookup_many


@dataclass(frozen=True)
class Particle:
    """Gaussian search distribution over the two scaling parameters."""

    mean: np.ndarray  # shape (2,)
    cov: np.ndarray  # shape (2, 2), SPD


@dataclass(frozen=True)
class OptimizationResult:
    best_scaling: tuple[float, float]
    trajectory: Trajectory
    cost: float
    feasible: bool
    iterations_used: int
    cost_trace: tuple[float, ...]  # running best feasible cost per iteration
    final_means: np.ndarray  # (P, 2) particle means after the last iteration


def apply_scaling(w: tuple[float, float] | np.ndarray, x_ref: Trajectory) -> Trajectory:
    """Scale every guidance point componentwise by (w_x, w_y)."""
    w = np.asarray(w, dtype=np.float64)
    return Trajectory(x_ref.points * w[None, :])


def _segment_directions(points: np.ndarray) -> np.ndarray:
    """Unit direction per point: forward difference, backward at the end.

    Zero-length segments inherit the previous valid direction (+x at the
    start).
    """
    k = points.shape[0]
    dirs = np.zeros((k, 2))
    prev = np.array([1.0, 0.0])
    for i in range(k):
        d = points[min(i + 1, k - 1)] - points[min(i, k - 2)]
        n = math.hypot(d[0], d[1])
        if n > 1e-12:
            prev = d / n
        dirs[i] = prev
    return dirs


def tube_points(traj: Trajectory, k: int, d: float, n_samples: int) -> np.ndarray:
    """Points spanning the robot-width band normal to the path at index k."""
    if d <= 0:
        raise ValueError("tube width must be positive")
    if n_samples < 2:
        raise ValueError("need at least 2 tube samples")
    pts = traj.points
    dirs = _segment_directions(pts)
    normal = np.array([-dirs[k, 1], dirs[k, 0]])
    alphas = np.linspace(-d / 2.0, d / 2.0, n_samples)
    return pts[k][None, :] + alphas[:, None] * normal[None, :]


def _batch_directions(trajs: np.ndarray) -> np.ndarray:
    """Per-point unit directions for a batch of trajectories (B, K, 2)."""
    b, k, _ = trajs.shape
    diffs = np.empty((b, k, 2))
    diffs[:, :-1] = trajs[:, 1:] - trajs[:, :-1]
    diffs[:, -1] = diffs[:, -2] if k >= 2 else np.array([1.0, 0.0])
    dirs = np.empty_like(diffs)
    prev = np.tile(np.array([1.0, 0.0]), (b, 1))
    for i in range(k):
        d = diffs[:, i]
        n = np.hypot(d[:, 0], d[:, 1])
        ok = n > 1e-12
        unit = np.where(ok[:, None], d / np.where(ok, n, 1.0)[:, None], prev)
        dirs[:, i] = unit
        prev = unit
    return dirs


def _batch_tube_scores(
    trajs: np.ndarray, grid: GroundScoreGrid, cfg: OptimizerConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and max score over the tube band, per (batch, point)."""
    dirs = _batch_directions(trajs)
    normals = np.stack([-dirs[..., 1], dirs[..., 0]], axis=-1)
    alphas = np.linspace(-cfg.robot_width / 2.0, cfg.robot_width / 2.0, cfg.tube_samples)
    tube = trajs[:, :, None, :] + alphas[None, None, :, None] * normals[:, :, None, :]
    flat = tube.reshape(-1, 2)
    scores = grid_lookup_many(grid, flat).reshape(tube.shape[:3])
    return scores.mean(axis=2), scores.max(axis=2)


def _batch_cost(
    w_batch: np.ndarray,
    grid: GroundScoreGrid,
    x_ref: Trajectory,
    cfg: OptimizerConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Objective value and tube feasibility for a (B, 2) batch of scalings."""
    ref = x_ref.points
    trajs = w_batch[:, None, :] * ref[None, :, :]
    q = np.asarray(cfg.tracking_weight)
    track = (((trajs - ref[None, :, :]) ** 2) * q[None, None, :]).sum(axis=(1, 2))
    tube_mean, tube_max = _batch_tube_scores(trajs, grid, cfg)
    safety = cfg.safety_weight * tube_mean.sum(axis=1)
    reg = cfg.reg_weight * ((w_batch - 1.0) ** 2).sum(axis=1)
    costs = track + safety + reg
    feasible = (tube_max <= cfg.safety_threshold).all(axis=1)
    # reject degenerate collapses: keep at least the minimum extent
    ref_extent = float(np.hypot(ref[:, 0], ref[:, 1]).max())
    required = min(ref_extent, cfg.min_refined_extent) - 1e-9
    extents = np.hypot(trajs[..., 0], trajs[..., 1]).max(axis=1)
    feasible &= extents >= required
    return costs, feasible


def evaluate_cost(
    w: tuple[float, float] | np.ndarray,
    grid: GroundScoreGrid,
    x_ref: Trajectory,
    cfg: OptimizerConfig,
) -> float:
    """Tracking + tube-safety + scaling-regularization objective."""
    costs, _ = _batch_cost(np.asarray([w], dtype=np.float64), grid, x_ref, cfg)
    return float(costs[0])


def tube_feasible(
    w: tuple[float, float] | np.ndarray,
    grid: GroundScoreGrid,
    x_ref: Trajectory,
    cfg: OptimizerConfig,
) -> bool:
    """True iff the tube max score stays at or below the threshold at every point."""
    _, feas = _batch_cost(np.asarray([w], dtype=np.float64), grid, x_ref, cfg)
    return bool(feas[0])


def softmax_weights(costs: Sequence[float] | np.ndarray) -> np.ndarray:
    """exp(-J) normalized, computed shift-invariantly from the min cost."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0 or not np.all(np.isfinite(costs)):
        raise ValueError("need at least one finite cost")
    shifted = np.exp(-(costs - costs.min()))
    return shifted / shifted.sum()


def kernel_repulsion(
    mu_p: np.ndarray, others: np.ndarray, sigma: float, literal_sign: bool = False
) -> np.ndarray:
    """Summed RBF force on mu_p from the other particle means.

    Points away from neighbors by default; ``literal_sign`` restores the
    raw kernel gradient (which points toward them).
    """
    if sigma <= 0:
        raise ValueError("kernel bandwidth must be positive")
    mu_p = np.asarray(mu_p, dtype=np.float64)
    others = np.asarray(others, dtype=np.float64).reshape(-1, 2)
    if others.shape[0] == 0:
        return np.zeros(2)
    diff = mu_p[None, :] - others
    sq = (diff**2).sum(axis=1)
    force = (diff / sigma**2) * np.exp(-sq / (2.0 * sigma**2))[:, None]
    g = force.sum(axis=0)
    return -g if literal_sign else g


def _median_bandwidth(means: np.ndarray) -> float:
    p = means.shape[0]
    if p < 2:
        return 1.0
    dists = [
        float(np.hypot(*(means[i] - means[j])))
        for i in range(p)
        for j in range(i + 1, p)
    ]
    return max(float(np.median(dists)), 1e-3)


def _floor_spd(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def particle_update(
    p: Particle,
    samples: np.ndarray,
    costs: np.ndarray,
    repulsion: np.ndarray,
    cfg: OptimizerConfig,
    unit_noise: Optional[np.ndarray] = None,
) -> Particle:
    """One recombination step for a single particle.

    Mean moves toward the softmax-weighted sample average plus the kernel
    force; covariance is recombined around the old mean. With the literal
    flag the covariance instead grows by the weighted unit-noise outer
    products (``unit_noise`` must then hold the standard-normal draws).
    """
    omega = softmax_weights(costs)
    delta = ((samples - p.mean[None, :]) * omega[:, None]).sum(axis=0)
    new_mean = p.mean + cfg.step_size * (delta + cfg.kernel_weight * repulsion)
    new_mean = np.clip(new_mean, cfg.scaling_min, cfg.scaling_max)
    if cfg.literal_alg1_covariance:
        if unit_noise is None:
            raise ValueError("literal covariance rule needs the unit-noise draws")
        outer = (unit_noise[:, :, None] * unit_noise[:, None, :] * omega[:, None, None]).sum(axis=0)
        new_cov = p.cov + cfg.step_size * outer
    else:
        centered = samples - p.mean[None, :]
        recomb = (centered[:, :, None] * centered[:, None, :] * omega[:, None, None]).sum(axis=0)
        new_cov = (1.0 - cfg.step_size) * p.cov + cfg.step_size * recomb
    new_cov = _floor_spd(new_cov, cfg.cov_floor)
    return Particle(new_mean, new_cov)


def _init_particles(cfg: OptimizerConfig, rng: np.random.Generator) -> list[Particle]:
    cov0 = cfg.init_cov_scale * np.eye(2)
    cov0 = _floor_spd(cov0, cfg.cov_floor)
    # One particle pinned at the identity scaling (the guidance itself is
    # always explored); one at the straight-ahead probe (lateral content
    # collapsed), which is the recovery move after an emergency rotation.
    means = [np.array([1.0, 1.0])]
    if cfg.particles >= 2:
        means.append(np.array([1.0, 0.0]))
    lo, hi = 1.0 - cfg.init_mean_spread, 1.0 + cfg.init_mean_spread
    while len(means) < cfg.particles:
        means.append(rng.uniform(lo, hi, size=2))
    return [
        Particle(np.clip(m, cfg.scaling_min, cfg.scaling_max), cov0.copy()) for m in means
    ]


def optimize(
    x_ref: Trajectory,
    grid: GroundScoreGrid,
    cfg: OptimizerConfig,
    rng_seed: int,
    trace_path: Optional[str | Path] = None,
) -> OptimizationResult:
    """Run the full particle search and return the best feasible scaling.

    Tracks the lowest-cost feasible sample seen across all iterations and
    particles. When no sample ever satisfies the tube constraint the
    guidance trajectory is returned unmodified with ``feasible=False``.
    Fully deterministic for a given seed.
    """
    if len(x_ref) < 2:
        raise ValueError("guidance trajectory must hold at least 2 points")
    rng = np.random.default_rng(rng_seed)
    particles = _init_particles(cfg, rng)

    best_cost = math.inf
    best_w: Optional[np.ndarray] = None
    trace: list[float] = []
    trace_rows: list[dict] = []

    for iteration in range(cfg.iterations):
        snapshot = np.array([p.mean for p in particles])
        if isinstance(cfg.kernel_bandwidth, str):
            sigma = _median_bandwidth(snapshot)
        else:
            sigma = max(float(cfg.kernel_bandwidth), 1e-3)

        new_particles = []
        for idx, particle in enumerate(particles):
            chol = np.linalg.cholesky(particle.cov)
            eps = rng.standard_normal((cfg.samples, 2))
            samples = particle.mean[None, :] + eps @ chol.T
            samples = np.clip(samples, cfg.scaling_min, cfg.scaling_max)
            costs, feas = _batch_cost(samples, grid, x_ref, cfg)

            if feas.any():
                local = np.where(feas, costs, math.inf)
                j = int(np.argmin(local))
                if local[j] < best_cost:
                    best_cost = float(local[j])
                    best_w = samples[j].copy()

            others = np.delete(snapshot, idx, axis=0)
            rep = kernel_repulsion(
                particle.mean, others, sigma, literal_sign=cfg.literal_kernel_sign
            )
            new_particles.append(
                particle_update(particle, samples, costs, rep, cfg, unit_noise=eps)
            )
            if trace_path is not None:
                trace_rows.append(
                    {
                        "iteration": iteration,
                        "particle": idx,
                        "mean": [float(v) for v in new_particles[-1].mean],
                        "best_cost": None if not math.isfinite(best_cost) else best_cost,
                        "feasible": bool(best_w is not None),
                    }
                )
        particles = new_particles
        trace.append(best_cost)

    if trace_path is not None:
        with open(trace_path, "w") as f:
            for row in trace_rows:
                f.write(json.dumps(row) + "\n")

    final_means = np.array([p.mean for p in particles])
    if best_w is None:
        return OptimizationResult(
            best_scaling=(1.0, 1.0),
            trajectory=x_ref,
            cost=math.inf,
            feasible=False,
            iterations_used=cfg.iterations,
            cost_trace=tuple(trace),
            final_means=final_means,
        )
    return OptimizationResult(
        best_scaling=(float(best_w[0]), float(best_w[1])),
        trajectory=apply_scaling(best_w, x_ref),
        cost=best_cost,
        feasible=True,
        iterations_used=cfg.iterations,
        cost_trace=tuple(trace),
        final_means=final_means,
    )
