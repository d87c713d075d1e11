"""Shared construction helpers for the test suite."""

import numpy as np

from i2a.clouds import PointCloud
from i2a.geometry import Pose, Rotation


def random_pose(rng, trans_scale=1.0):
    return Pose(Rotation.random(rng), rng.uniform(-trans_scale, trans_scale, 3))


def random_cloud(rng, n, scale=1.0, labeled=False):
    pts = rng.uniform(-scale, scale, (n, 3))
    colors = rng.uniform(0, 1, (n, 3))
    labels = rng.integers(0, 4, n).astype(np.uint32) if labeled else None
    return PointCloud(pts, colors, labels)


def relative_error(a, b, floor=1e-10):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))
