"""Keypose chunks and their continuous encoding for the diffusion state.

Each keypose becomes a 10-vector: the first two rotation columns (a
continuous 6-entry rotation code that avoids quaternion sign flips in noise
space), the workspace-normalized translation and a +/-1 gripper flag.
Decoding re-orthonormalizes via Gram-Schmidt, so any real-valued state maps
back onto SE(3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..geometry import Pose, Rotation

ROW_WIDTH = 10
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class ActionSequence:
    """An action chunk: k keyposes plus gripper-closed flags."""

    poses: tuple[Pose, ...]
    gripper: np.ndarray

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(poses) < 1:
            raise ValueError("action chunk must contain at least one keypose")
        g = np.asarray(self.gripper, dtype=bool).reshape(-1)
        if len(g) != len(poses):
            raise ValueError("gripper flags must match the number of keyposes")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "gripper", g)

    def __len__(self) -> int:
        return len(self.poses)


def rot6d_from_matrix(m: np.ndarray) -> np.ndarray:
    """First two columns, shape (..., 6)."""
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def rot6d_to_matrix(r6: np.ndarray):
    """Gram-Schmidt decode of (..., 6) to (..., 3, 3) plus a backward cache."""
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    na = np.maximum(np.linalg.norm(a, axis=-1, keepdims=True), _NORM_FLOOR)
    b1 = a / na
    dot = np.sum(b1 * b, axis=-1, keepdims=True)
    w = b - dot * b1
    nw = np.maximum(np.linalg.norm(w, axis=-1, keepdims=True), _NORM_FLOOR)
    b2 = w / nw
    b3 = np.cross(b1, b2)
    m = np.stack([b1, b2, b3], axis=-1)
    return m, (b, na, b1, w, nw, b2, b3)


def rot6d_backward(cache, d_m: np.ndarray) -> np.ndarray:
    """Gradient of <d_m, matrix> w.r.t. the 6 raw entries."""
    b, na, b1, w, nw, b2, b3 = cache
    d_b1 = d_m[..., :, 0].copy()
    d_b2 = d_m[..., :, 1].copy()
    d_b3 = d_m[..., :, 2]
    # b3 = b1 x b2
    d_b1 += np.cross(b2, d_b3)
    d_b2 += np.cross(d_b3, b1)
    # b2 = w / |w|
    d_w = (d_b2 - b2 * np.sum(b2 * d_b2, axis=-1, keepdims=True)) / nw
    # w = b - (b1 . b) b1
    d_b = d_w - b1 * np.sum(b1 * d_w, axis=-1, keepdims=True)
    d_b1 += -b * np.sum(b1 * d_w, axis=-1, keepdims=True) - np.sum(b1 * b, axis=-1, keepdims=True) * d_w
    # b1 = a / |a|
    d_a = (d_b1 - b1 * np.sum(b1 * d_b1, axis=-1, keepdims=True)) / na
    return np.concatenate([d_a, d_b], axis=-1)


def encode_chunk(seq: ActionSequence, trans_center, trans_scale: float) -> np.ndarray:
    """Chunk as a (k, 10) diffusion-state array."""
    k = len(seq)
    x = np.zeros((k, ROW_WIDTH))
    center = np.asarray(trans_center, dtype=np.float64)
    for i, pose in enumerate(seq.poses):
        x[i, 0:6] = rot6d_from_matrix(pose.rotation.m)
        x[i, 6:9] = (pose.translation - center) / trans_scale
        x[i, 9] = 1.0 if seq.gripper[i] else -1.0
    return x


def decode_chunk(x: np.ndarray, trans_center, trans_scale: float) -> ActionSequence:
    """Inverse of encode_chunk; rotations land exactly on SO(3)."""
    center = np.asarray(trans_center, dtype=np.float64)
    mats, _ = rot6d_to_matrix(x[:, 0:6])
    poses = tuple(
        Pose(Rotation(mats[i]), x[i, 6:9] * trans_scale + center) for i in range(len(x))
    )
    return ActionSequence(poses, x[:, 9] > 0.0)
