"""Pinhole camera model, RGB-D observations, projection and unprojection.

Depth is stored as the camera-frame z coordinate in meters; 0 marks pixels
with no geometry. Projection rounds the continuous pixel position to the
nearest integer pixel and unprojection casts the ray through that integer
pixel, so a roundtrip displaces points by at most half a pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clouds import PointCloud
from .geometry import Pose, Rotation, inverse


class SegmentNotFoundError(Exception):
    """Requested segment id does not appear in an observation."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics in pixels plus the world-to-camera extrinsic pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: Pose

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World-to-camera pose for a camera at `position` looking at `target`.

    Camera axes: +z forward, +x right, +y down (image row direction).
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("view direction is parallel to the up vector")
    right /= nr
    down = np.cross(forward, right)
    r = Rotation(np.stack([right, down, forward]))
    return Pose(r, -r.apply(position))


@dataclass(frozen=True)
class SceneObservation:
    """Single-view RGB-D frame with segmentation and its camera."""

    rgb: np.ndarray
    depth: np.ndarray
    segmentation: np.ndarray
    camera: CameraModel

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        seg = np.asarray(self.segmentation, dtype=np.uint32)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"rgb must be HxWx3, got {rgb.shape}")
        if depth.shape != rgb.shape[:2] or seg.shape != rgb.shape[:2]:
            raise ValueError("rgb, depth and segmentation must share HxW")
        if depth.shape != (self.camera.height, self.camera.width):
            raise ValueError("observation size does not match the camera")
        if np.any(depth < 0):
            raise ValueError("depth must be non-negative")
        object.__setattr__(self, "rgb", _frozen(rgb.copy()))
        object.__setattr__(self, "depth", _frozen(depth.copy()))
        object.__setattr__(self, "segmentation", _frozen(seg.copy()))

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0.0


def project(cloud: PointCloud, cam: CameraModel) -> SceneObservation:
    """Z-buffered pinhole rendering of a point cloud.

    The nearest point claims each pixel; exact depth ties go to the lowest
    point index. Pixels no point lands on get depth 0, black color and
    segment 0. Uncolored clouds render mid-gray, unlabeled points as 0.
    """
    h, w = cam.height, cam.width
    rgb = np.zeros((h, w, 3))
    depth = np.zeros((h, w))
    seg = np.zeros((h, w), dtype=np.uint32)
    if len(cloud) > 0:
        pc = cam.extrinsic.apply(cloud.points)
        z = pc[:, 2]
        front = z > 1e-9
        pc, z = pc[front], z[front]
        u = np.floor(cam.fx * pc[:, 0] / z + cam.cx + 0.5).astype(np.int64)
        v = np.floor(cam.fy * pc[:, 1] / z + cam.cy + 0.5).astype(np.int64)
        ok = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        idx_all = np.flatnonzero(front)[ok]
        u, v, z = u[ok], v[ok], z[ok]
        colors = np.full((len(cloud), 3), 0.5) if cloud.colors is None else cloud.colors
        labels = np.zeros(len(cloud), dtype=np.uint32) if cloud.labels is None else cloud.labels
        # Write far-to-near so the nearest point lands last; equal depths are
        # ordered by descending index so the lowest index wins the tie.
        order = np.lexsort((idx_all, z))[::-1]
        uu, vv = u[order], v[order]
        depth[vv, uu] = z[order]
        rgb[vv, uu] = colors[idx_all[order]]
        seg[vv, uu] = labels[idx_all[order]]
    return SceneObservation(rgb, depth, seg, cam)


def unproject(obs: SceneObservation, mask: np.ndarray | None = None) -> PointCloud:
    """World-frame cloud from every valid-depth pixel (optionally masked)."""
    cam = obs.camera
    keep = obs.valid_mask if mask is None else (obs.valid_mask & mask)
    v, u = np.nonzero(keep)
    z = obs.depth[v, u]
    x = (u - cam.cx) / cam.fx * z
    y = (v - cam.cy) / cam.fy * z
    pts_cam = np.stack([x, y, z], axis=1)
    pts = inverse(cam.extrinsic).apply(pts_cam)
    return PointCloud(pts, obs.rgb[v, u], obs.segmentation[v, u])


def quantization_bound(obs: SceneObservation) -> float:
    """Worst-case world displacement of a project/unproject roundtrip.

    Rounding moves the ray by at most half a pixel in u and v, which at
    depth z corresponds to z/2 * sqrt(fx^-2 + fy^-2) in the world.
    """
    cam = obs.camera
    zmax = obs.depth.max(initial=0.0)
    return float(0.5 * zmax * np.hypot(1.0 / cam.fx, 1.0 / cam.fy))
