"""Depth image to ground-frame traversability scores.

Pipeline: normalized depth -> Gaussian smoothing -> vertical Sobel gradient
-> row weighting -> threshold to a binary map -> morphological cleanup ->
signed nearest-boundary distances normalized to [-1, 1] -> pinhole
projection onto a robot-frame metric grid.

Image conventions: row 0 is the top of the image, depth values are
normalized to [0, 1] by the camera max range. Binary maps use 1 for
traversable, 0 for obstacle. Score maps are negative in free space,
positive near obstacles, zero on boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .domain import CameraModel, GroundScoreGrid, RobotState, ScoreGridSpec, Workspace
from .geometry import Obstacle, obstacle_at_time, points_in_obstacle


@dataclass(frozen=True)
class TsmConfig:
    gaussian_sigma: float = 1.5
    gaussian_kernel_size: int = 5
    row_weight_top: float = 0.5
    row_weight_bottom: float = 1.5
    gradient_threshold: float = 0.08
    bottom_rows_forced_free: Optional[int] = None  # None: rows // 10
    out_of_grid_score: float = 0.0
    # The camera cannot see the robot's own footprint; unobserved cells
    # within this radius of the robot are scored free (the robot is
    # standing there collision-free). Kept no larger than the footprint:
    # anything beyond it is genuinely unknown, not free.
    near_field_free_radius: float = 0.25
    near_field_score: float = -0.8
    # Ground segmentation: pixels reading significantly nearer than the
    # flat-ground depth of their row are standing structure, not floor
    # (their faces are constant-depth and invisible to the gradient).
    ground_consistency_enabled: bool = True
    ground_consistency_tol: float = 0.15
    # Optional extra conservatism: relabel everything above the lowest
    # obstacle edge per column (sacrifices see-over information).
    column_fill_above: bool = False

    def __post_init__(self):
        if self.gaussian_kernel_size < 3 or self.gaussian_kernel_size % 2 == 0:
            raise ValueError("gaussian_kernel_size must be odd and >= 3")
        if not (self.row_weight_bottom >= self.row_weight_top > 0):
            raise ValueError("need row_weight_bottom >= row_weight_top > 0")

    def forced_free_rows(self, rows: int) -> int:
        if self.bottom_rows_forced_free is None:
            return rows // 10
        return self.bottom_rows_forced_free


def _check_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.shape[0] < 3 or depth.shape[1] < 3:
        raise ValueError("depth image must be 2-D with at least 3 rows and 3 cols")
    if depth.min() < 0.0 or depth.max() > 1.0:
        raise ValueError("depth values must lie in [0, 1]")
    return depth


def gaussian_smooth(depth: np.ndarray, cfg: TsmConfig) -> np.ndarray:
    """Separable Gaussian blur with edge replication, re-clamped to [0, 1]."""
    depth = _check_depth(depth)
    k = cfg.gaussian_kernel_size
    if k > depth.shape[0] or k > depth.shape[1]:
        raise ValueError(f"kernel size {k} exceeds image shape {depth.shape}")
    if cfg.gaussian_sigma <= 0.0:
        return depth.copy()
    radius = k // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / cfg.gaussian_sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(depth, radius, mode="edge")
    tmp = np.zeros_like(padded)
    for i, w in enumerate(kernel):
        tmp[radius:-radius, :] += w * padded[i : i + depth.shape[0], :]
    out = np.zeros_like(depth)
    for j, w in enumerate(kernel):
        out += w * tmp[radius:-radius, j : j + depth.shape[1]]
    return np.clip(out, 0.0, 1.0)


def vertical_gradient(depth: np.ndarray) -> np.ndarray:
    """3x3 Sobel-y response (positive when depth grows downward)."""
    depth = _check_depth(depth)
    p = np.pad(depth, 1, mode="edge")
    vert = p[2:, :] - p[:-2, :]
    return vert[:, :-2] + 2.0 * vert[:, 1:-1] + vert[:, 2:]


def apply_row_weight(grad: np.ndarray, cfg: TsmConfig) -> np.ndarray:
    """Scale each row by a linear top-to-bottom ramp of weights."""
    grad = np.asarray(grad, dtype=np.float64)
    rows = grad.shape[0]
    if rows == 1:
        return grad * cfg.row_weight_top
    ramp = cfg.row_weight_top + (cfg.row_weight_bottom - cfg.row_weight_top) * (
        np.arange(rows) / (rows - 1)
    )
    return grad * ramp[:, None]


def binarize(weighted_grad: np.ndarray, cfg: TsmConfig) -> np.ndarray:
    """Threshold to {0 obstacle, 1 free}; bottom rows are forced free."""
    wg = np.asarray(weighted_grad, dtype=np.float64)
    binary = (np.abs(wg) <= cfg.gradient_threshold).astype(np.uint8)
    forced = cfg.forced_free_rows(wg.shape[0])
    if forced > 0:
        binary[-forced:, :] = 1
    return binary


def _neighbor_count(mask: np.ndarray) -> np.ndarray:
    """Number of true 4-neighbors per pixel (outside the image counts false)."""
    n = np.zeros(mask.shape, dtype=np.int32)
    n[1:, :] += mask[:-1, :]
    n[:-1, :] += mask[1:, :]
    n[:, 1:] += mask[:, :-1]
    n[:, :-1] += mask[:, 1:]
    return n


def _in_image_neighbors(shape: tuple[int, int]) -> np.ndarray:
    ones = np.ones(shape, dtype=np.int32)
    return _neighbor_count(ones.astype(bool))


def refine_boundaries(binary: np.ndarray) -> np.ndarray:
    """Morphological cleanup of the binary traversability map.

    First removes isolated obstacle pixels (no 4-adjacent obstacle), then
    fills free pixels fully enclosed by obstacles in the updated map.
    """
    binary = np.asarray(binary)
    if not np.isin(binary, (0, 1)).all():
        raise ValueError("binary map must contain only 0 and 1")
    out = binary.astype(np.uint8).copy()
    obstacle = out == 0
    isolated = obstacle & (_neighbor_count(obstacle) == 0)
    out[isolated] = 1
    free = out == 1
    enclosed = free & (_neighbor_count(out == 0) == _in_image_neighbors(out.shape))
    out[enclosed] = 0
    return out


@lru_cache(maxsize=8)
def expected_ground_depth(cam: CameraModel) -> np.ndarray:
    """Normalized z-depth of bare flat ground per pixel (capped at 1)."""
    b = (np.arange(cam.rows) - cam.cy) / cam.fy
    a = (np.arange(cam.cols) - cam.cx) / cam.fx
    aa, bb = np.meshgrid(a, b)
    cp, sp = math.cos(cam.pitch), math.sin(cam.pitch)
    dx = cp - bb * sp
    dy = -aa
    dz = -bb * cp - sp
    horiz = np.maximum(np.hypot(dx, dy), 1e-12)
    slope = dz / horiz
    with np.errstate(divide="ignore"):
        s_ground = np.where(slope < 0.0, -cam.height / np.where(slope < 0.0, slope, -1.0), np.inf)
    depth = s_ground / horiz
    depth = np.clip(depth / cam.max_range, 0.0, 1.0)
    depth[~np.isfinite(depth)] = 1.0
    out = depth
    out.setflags(write=False)
    return out


def ground_consistency_binary(depth: np.ndarray, cam: CameraModel, tol: float) -> np.ndarray:
    """{0, 1} map: 0 where the depth is markedly nearer than flat ground.

    Standing structure presents a roughly constant-depth face that always
    reads nearer than the ground it occludes; the vertical gradient alone
    cannot tell such a face from floor.
    """
    expected = expected_ground_depth(cam)
    return np.where(np.asarray(depth) < expected * (1.0 - tol), 0, 1).astype(np.uint8)


def segment_fill_above(binary: np.ndarray) -> np.ndarray:
    """Column-wise obstacle/free segmentation of the edge-labeled map.

    Traversable ground is the region connected to the image bottom in each
    column; everything at or above the lowest obstacle edge is an obstacle
    face, its occlusion shadow, or unknown terrain, and is relabeled 0.
    """
    b = np.asarray(binary).astype(np.uint8).copy()
    rows = b.shape[0]
    obstacle = b == 0
    has = obstacle.any(axis=0)
    row_idx = np.arange(rows)[:, None]
    lowest = np.where(obstacle, row_idx, -1).max(axis=0)
    above = row_idx < lowest[None, :]
    b[above & has[None, :]] = 0
    return b


def boundary_mask(binary: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbor of the opposite label."""
    b = np.asarray(binary).astype(bool)
    opposite = np.zeros(b.shape, dtype=bool)
    opposite[1:, :] |= b[:-1, :] != b[1:, :]
    opposite[:-1, :] |= b[1:, :] != b[:-1, :]
    opposite[:, 1:] |= b[:, :-1] != b[:, 1:]
    opposite[:, :-1] |= b[:, 1:] != b[:, :-1]
    return opposite


def distance_score(binary: np.ndarray) -> np.ndarray:
    """Signed nearest-boundary distances normalized to [-1, 1].

    Obstacle pixels score positive, free pixels negative, boundary pixels
    exactly zero. A uniform map has no boundary and degenerates to the
    constant -1 (all free) or +1 (all obstacle).
    """
    binary = np.asarray(binary)
    if not np.isin(binary, (0, 1)).all():
        raise ValueError("binary map must contain only 0 and 1")
    bound = boundary_mask(binary)
    if not bound.any():
        return np.full(binary.shape, -1.0 if binary.flat[0] == 1 else 1.0)
    dist = distance_transform_edt(~bound)
    signed = np.where(binary == 0, dist, -dist)
    signed[bound] = 0.0
    peak = np.abs(signed).max()
    if peak == 0.0:
        return signed
    return signed / peak


def camera_rows_cols(cam: CameraModel, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project robot-frame ground points (N, 2) into image (row, col).

    Returns (rows, cols, valid) where valid is False for points behind the
    camera plane. The camera sits ``cam.height`` above the ground at the
    robot origin, pitched down by ``cam.pitch``.
    """
    x = pts[:, 0]
    y = pts[:, 1]
    cp, sp = math.cos(cam.pitch), math.sin(cam.pitch)
    z_c = x * cp + cam.height * sp
    y_c = -x * sp + cam.height * cp
    valid = z_c > 1e-9
    safe_z = np.where(valid, z_c, 1.0)
    rows = cam.cy + cam.fy * y_c / safe_z
    cols = cam.cx - cam.fx * y / safe_z
    return rows, cols, valid


def _bilinear_image(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = img.shape
    inside = (rows >= 0.0) & (rows <= h - 1) & (cols >= 0.0) & (cols <= w - 1)
    r = np.clip(rows, 0.0, h - 1)
    c = np.clip(cols, 0.0, w - 1)
    r0 = np.minimum(r.astype(np.int64), h - 2) if h > 1 else np.zeros_like(r, dtype=np.int64)
    c0 = np.minimum(c.astype(np.int64), w - 2) if w > 1 else np.zeros_like(c, dtype=np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    ar = r - r0
    ac = c - c0
    vals = (
        img[r0, c0] * (1 - ar) * (1 - ac)
        + img[r1, c0] * ar * (1 - ac)
        + img[r0, c1] * (1 - ar) * ac
        + img[r1, c1] * ar * ac
    )
    return vals, inside


def project_to_ground(
    img_scores: np.ndarray,
    cam: CameraModel,
    grid_spec: ScoreGridSpec,
    out_of_grid_score: float = 0.0,
    near_field_free_radius: float = 0.0,
    near_field_score: float = -0.8,
) -> GroundScoreGrid:
    """Sample the image-space score map on a robot-frame metric grid.

    Grid cells that project outside the image (including behind the
    camera) receive ``out_of_grid_score``, except unobserved cells within
    ``near_field_free_radius`` of the robot, which receive
    ``near_field_score`` (the robot's own standing room).
    """
    if cam.height <= 0:
        raise ValueError("camera height must be positive")
    img = np.asarray(img_scores, dtype=np.float64)
    xs = grid_spec.x_min + grid_spec.resolution * np.arange(grid_spec.rows)
    ys = grid_spec.y_min + grid_spec.resolution * np.arange(grid_spec.cols)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    rows, cols, valid = camera_rows_cols(cam, pts)
    vals, inside = _bilinear_image(img, rows, cols)
    observed = valid & inside
    fill = np.full(pts.shape[0], out_of_grid_score)
    if near_field_free_radius > 0.0:
        near = (pts**2).sum(axis=1) <= near_field_free_radius**2
        fill = np.where(near, near_field_score, fill)
    out = np.where(observed, vals, fill)
    values = np.clip(out.reshape(grid_spec.rows, grid_spec.cols), -1.0, 1.0)
    return GroundScoreGrid(
        values, grid_spec.resolution, grid_spec.origin, out_of_grid_score=out_of_grid_score
    )


def depth_to_ground_scores(
    depth: np.ndarray,
    cfg: TsmConfig,
    cam: CameraModel,
    grid_spec: ScoreGridSpec,
) -> GroundScoreGrid:
    """Full pipeline: depth image in, robot-frame score grid out."""
    smooth = gaussian_smooth(depth, cfg)
    grad = vertical_gradient(smooth)
    weighted = apply_row_weight(grad, cfg)
    binary = refine_boundaries(binarize(weighted, cfg))
    if cfg.ground_consistency_enabled:
        binary = binary & ground_consistency_binary(smooth, cam, cfg.ground_consistency_tol)
    if cfg.column_fill_above:
        binary = segment_fill_above(binary)
    scores = distance_score(binary)
    return project_to_ground(
        scores,
        cam,
        grid_spec,
        out_of_grid_score=cfg.out_of_grid_score,
        near_field_free_radius=cfg.near_field_free_radius,
        near_field_score=cfg.near_field_score,
    )


def rasterize_occupancy(
    obstacles: Sequence[Obstacle],
    workspace: Optional[Workspace],
    pose: RobotState,
    grid_spec: ScoreGridSpec,
    elapsed: float = 0.0,
) -> np.ndarray:
    """Binary {0 obstacle, 1 free} robot-frame grid from world geometry."""
    xs = grid_spec.x_min + grid_spec.resolution * np.arange(grid_spec.rows)
    ys = grid_spec.y_min + grid_spec.resolution * np.arange(grid_spec.cols)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    wx = pose.x + ct * gx - st * gy
    wy = pose.y + st * gx + ct * gy
    pts = np.stack([wx.ravel(), wy.ravel()], axis=1)
    occupied = np.zeros(pts.shape[0], dtype=bool)
    for obs in obstacles:
        occupied |= points_in_obstacle(pts, obstacle_at_time(obs, elapsed))
    if workspace is not None:
        outside = (
            (pts[:, 0] < workspace.x_min)
            | (pts[:, 0] > workspace.x_max)
            | (pts[:, 1] < workspace.y_min)
            | (pts[:, 1] > workspace.y_max)
        )
        occupied |= outside
    return np.where(occupied, 0, 1).astype(np.uint8).reshape(grid_spec.rows, grid_spec.cols)


def score_from_occupancy(
    obstacles: Sequence[Obstacle],
    workspace: Optional[Workspace],
    pose: RobotState,
    grid_spec: ScoreGridSpec,
    elapsed: float = 0.0,
    out_of_grid_score: float = 0.0,
) -> GroundScoreGrid:
    """Ground-truth score grid: rasterized occupancy + signed distances."""
    binary = rasterize_occupancy(obstacles, workspace, pose, grid_spec, elapsed)
    values = distance_score(binary)
    return GroundScoreGrid(
        values, grid_spec.resolution, grid_spec.origin, out_of_grid_score=out_of_grid_score
    )


# --- SPMAP v1 file format: ASCII header + row-major little-endian float32 ---


def write_spmap(
    path: str | Path,
    values: np.ndarray,
    resolution: float = 1.0,
    origin: tuple[float, float] = (0.0, 0.0),
) -> None:
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError("SPMAP payload must be 2-D")
    header = f"SPMAP v1 {values.shape[0]} {values.shape[1]} {resolution!r} {origin[0]!r} {origin[1]!r}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(values.astype("<f4").tobytes())


def read_spmap(path: str | Path) -> tuple[np.ndarray, float, tuple[float, float]]:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 7 or header[0] != "SPMAP" or header[1] != "v1":
            raise ValueError(f"not an SPMAP v1 file: {path}")
        rows, cols = int(header[2]), int(header[3])
        resolution = float(header[4])
        origin = (float(header[5]), float(header[6]))
        payload = f.read(rows * cols * 4)
    if len(payload) != rows * cols * 4:
        raise ValueError(f"SPMAP payload truncated in {path}")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return values, resolution, origin
