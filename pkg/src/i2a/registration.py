"""Rigid registration of corresponded point sets.

The closed-form least-squares alignment (SVD of the cross-covariance with
reflection correction) assumes index correspondence; an iterative
nearest-neighbor refinement is available when correspondences are unknown.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cameras import SceneObservation, SegmentNotFoundError, unproject
from .clouds import PointCloud
from .geometry import Pose, Rotation

DEGENERACY_RATIO = 1e-9


class RegistrationError(Exception):
    pass


class LengthMismatchError(RegistrationError):
    """Source and destination clouds have different point counts."""


class TooFewPointsError(RegistrationError):
    """Fewer than three point pairs."""


class DegenerateCloudError(RegistrationError):
    """Source points are coincident or collinear; rotation not identifiable."""


@dataclass(frozen=True)
class RegistrationResult:
    transform: Pose
    rmsd: float
    num_points: int


def _check_degeneracy(centered_src: np.ndarray) -> None:
    sv = np.linalg.svd(centered_src, compute_uv=False)
    if sv[0] <= 0.0 or sv[1] / sv[0] < DEGENERACY_RATIO:
        raise DegenerateCloudError(
            "source covariance rank < 2 (points coincident or collinear)"
        )


def kabsch_register(src: PointCloud, dst: PointCloud) -> RegistrationResult:
    """Least-squares rigid transform mapping src onto dst, by index pairing.

    Minimizes sum ||R src_i + t - dst_i||^2 over SE(3). When the unconstrained
    orthogonal optimum is a reflection, the singular vector of the smallest
    singular value is negated so det(R) = +1.
    """
    if len(src) != len(dst):
        raise LengthMismatchError(f"{len(src)} source vs {len(dst)} destination points")
    if len(src) < 3:
        raise TooFewPointsError(f"need at least 3 points, got {len(src)}")
    a = src.points
    b = dst.points
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    a0, b0 = a - ca, b - cb
    _check_degeneracy(a0)
    h = a0.T @ b0
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    pose = Pose(Rotation(r), t)
    residual = pose.apply(a) - b
    rmsd = float(np.sqrt((residual**2).sum(axis=1).mean()))
    return RegistrationResult(pose, rmsd, len(src))


def icp_register(
    src: PointCloud,
    dst: PointCloud,
    max_iterations: int = 50,
    tolerance: float = 1e-8,
    initial: Pose | None = None,
) -> RegistrationResult:
    """Nearest-neighbor ICP for clouds without known correspondences.

    Re-fits the full transform against matched destination points each
    iteration and stops when the rmsd improves by less than `tolerance`.
    Destination may have any size >= 3; convergence is local, so a sensible
    initial pose matters for large motions.
    """
    if len(src) < 3 or len(dst) < 3:
        raise TooFewPointsError("ICP needs at least 3 points on each side")
    tree = cKDTree(dst.points)
    pose = initial if initial is not None else Pose.identity()
    last = np.inf
    result = None
    for _ in range(max_iterations):
        moved = pose.apply(src.points)
        _, nn = tree.query(moved)
        matched = dst.select(nn)
        result = kabsch_register(src, matched)
        pose = result.transform
        if abs(last - result.rmsd) < tolerance:
            break
        last = result.rmsd
    return result


def extract_object_cloud(obs: SceneObservation, segment_id: int) -> PointCloud:
    """Unprojected world points of one segment."""
    mask = obs.segmentation == np.uint32(segment_id)
    if not np.any(mask & obs.valid_mask):
        raise SegmentNotFoundError(f"segment {segment_id} not present in observation")
    return unproject(obs, mask)
