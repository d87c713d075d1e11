"""Point clouds: positions with optional colors and per-point segment labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose, ScaleTransform


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """N points in meters, optional [0,1] RGB colors and uint32 labels."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts.copy()))
        n = len(pts)
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(col) != n:
                raise ValueError(f"colors length {len(col)} != points length {n}")
            object.__setattr__(self, "colors", _frozen(col.copy()))
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.uint32).reshape(-1)
            if len(lab) != n:
                raise ValueError(f"labels length {len(lab)} != points length {n}")
            object.__setattr__(self, "labels", _frozen(lab.copy()))

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.uint32))

    def select(self, index) -> "PointCloud":
        """Subset by boolean mask or index array."""
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.labels is None else self.labels[index],
        )

    def with_labels(self, label: int) -> "PointCloud":
        return PointCloud(self.points, self.colors, np.full(len(self), label, dtype=np.uint32))


def concat_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    """Union of clouds; colors/labels are kept only if present everywhere."""
    clouds = [c for c in clouds]
    if not clouds:
        return PointCloud.empty()
    pts = np.concatenate([c.points for c in clouds])
    colors = None
    if all(c.colors is not None for c in clouds):
        colors = np.concatenate([c.colors for c in clouds])
    labels = None
    if all(c.labels is not None for c in clouds):
        labels = np.concatenate([c.labels for c in clouds])
    return PointCloud(pts, colors, labels)


def apply_transform(pose: Pose, scale: ScaleTransform, cloud: PointCloud) -> PointCloud:
    """Map each point x -> R (s x) + t; colors and labels ride along."""
    return PointCloud(pose.apply(scale.apply(cloud.points)), cloud.colors, cloud.labels)


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    d_ab = cKDTree(b.points).query(a.points)[0].mean()
    d_ba = cKDTree(a.points).query(b.points)[0].mean()
    return float(0.5 * (d_ab + d_ba))


def voxel_keys(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Integer grid coordinates of each point, (N, 3) int64."""
    return np.floor(np.asarray(points) / voxel_size).astype(np.int64)


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One point per occupied voxel: centroid, mean color, majority label.

    Output order is lexicographic in the integer voxel key, so the result is
    deterministic for a given input.
    """
    if len(cloud) == 0:
        return cloud
    keys = voxel_keys(cloud.points, voxel_size)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    n_vox = len(first)
    counts = np.bincount(inverse, minlength=n_vox).astype(np.float64)
    pts = np.zeros((n_vox, 3))
    for k in range(3):
        pts[:, k] = np.bincount(inverse, weights=cloud.points[:, k], minlength=n_vox) / counts
    colors = None
    if cloud.colors is not None:
        colors = np.zeros((n_vox, 3))
        for k in range(3):
            colors[:, k] = np.bincount(inverse, weights=cloud.colors[:, k], minlength=n_vox) / counts
    labels = None
    if cloud.labels is not None:
        labels = majority_labels(inverse, cloud.labels, n_vox)
    return PointCloud(pts, colors, labels)


def majority_labels(group_index: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    """Most frequent label per group; ties break toward the smaller label."""
    order = np.lexsort((labels, group_index))
    gi = group_index[order]
    li = np.asarray(labels, dtype=np.int64)[order]
    # Boundaries of runs with identical (group, label).
    new_run = np.ones(len(gi), dtype=bool)
    new_run[1:] = (gi[1:] != gi[:-1]) | (li[1:] != li[:-1])
    starts = np.flatnonzero(new_run)
    run_group = gi[starts]
    run_label = li[starts]
    run_count = np.diff(np.append(starts, len(gi)))
    # Highest count wins; for equal counts the smaller label (earlier run,
    # since runs are label-sorted inside a group) must win, so order runs by
    # (group, count, -label) and take the last run of each group.
    pick = np.lexsort((-run_label, run_count, run_group))
    rg = run_group[pick]
    last_of_group = np.ones(len(rg), dtype=bool)
    last_of_group[:-1] = rg[1:] != rg[:-1]
    out = np.zeros(n_groups, dtype=np.uint32)
    out[rg[last_of_group]] = run_label[pick][last_of_group].astype(np.uint32)
    return out
