"""SO(3)/SE(3) primitives: rotations, poses and the uniform scale transform.

Conventions: rotation matrices act on column vectors, poses map points as
x -> R x + t, and composition a * b applies b first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Orthonormality drift above this bound triggers re-projection onto SO(3);
# it equals the construction invariant so freshly built rotations always
# satisfy max|R^T R - I| <= 1e-9.
ORTHONORMAL_TOL = 1e-9


def _project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Rotation:
    """A proper rotation: orthonormal 3x3 matrix with det +1.

    Noisy inputs are re-projected onto SO(3); an exact reflection
    (orthonormal, det -1) is rejected instead of silently flipped.
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation matrix has non-finite entries")
        if np.linalg.det(m) < 0.0:
            raise ValueError("matrix is a reflection, not a rotation")
        err = np.abs(m.T @ m - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            m = _project_to_so3(m)
        object.__setattr__(self, "m", _frozen(m.copy()))

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.eye(3))

    @staticmethod
    def about_x(angle: float) -> "Rotation":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation(np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]]))

    @staticmethod
    def about_y(angle: float) -> "Rotation":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation(np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]]))

    @staticmethod
    def about_z(angle: float) -> "Rotation":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]]))

    @staticmethod
    def from_rotvec(v) -> "Rotation":
        """Rotation by angle ||v|| about axis v (Rodrigues)."""
        v = np.asarray(v, dtype=np.float64)
        angle = np.linalg.norm(v)
        if angle < 1e-300:
            return Rotation.identity()
        k = v / angle
        kx = skew(k)
        m = np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)
        return Rotation(m)

    @staticmethod
    def random(rng: np.random.Generator) -> "Rotation":
        """Uniform random rotation via a normalized Gaussian quaternion."""
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Rotation(m)

    def transpose(self) -> "Rotation":
        return Rotation(self.m.T)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate one point (3,) or a stack (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.m.T

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.m @ other.m)


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ x == cross(v, x)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def geodesic_distance(r1: Rotation, r2: Rotation) -> float:
    """Angle of the relative rotation, arccos((tr(r1^T r2) - 1) / 2).

    The arccos argument is clamped to [-1, 1]; floating-point traces can
    leave the domain by a few ulp and clamping keeps the result NaN-free.
    """
    t = np.trace(r1.m.T @ r2.m)
    return float(np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0)))


@dataclass(frozen=True)
class Pose:
    """Rigid transform on R^3: x -> rotation @ x + translation (meters)."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite entries")
        object.__setattr__(self, "translation", _frozen(t.copy()))

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"homogeneous matrix must be 4x4, got {m.shape}")
        return Pose(Rotation(m[:3, :3]), m[:3, 3])

    @staticmethod
    def random(rng: np.random.Generator, trans_scale: float = 1.0) -> "Pose":
        return Pose(Rotation.random(rng), rng.uniform(-trans_scale, trans_scale, 3))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.m
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack (N, 3)."""
        return self.rotation.apply(points) + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a."""
    return Pose(a.rotation @ b.rotation, a.rotation.apply(b.translation) + a.translation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.transpose()
    return Pose(rt, -rt.apply(p.translation))


def translation_distance(p1, p2) -> float:
    """Euclidean distance between two 3-vectors (meters)."""
    return float(np.linalg.norm(np.asarray(p1, dtype=np.float64) - np.asarray(p2, dtype=np.float64)))


@dataclass(frozen=True)
class ScaleTransform:
    """Uniform positive scale; as a 4x4 matrix, diag(s, s, s, 1)."""

    s: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s > 0):
            raise ValueError(f"scale must be positive and finite, got {self.s}")

    @staticmethod
    def identity() -> "ScaleTransform":
        return ScaleTransform(1.0)

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.s, self.s, self.s, 1.0])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.s
