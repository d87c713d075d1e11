import numpy as np
import pytest

from i2a.geometry import (
    Pose,
    Rotation,
    ScaleTransform,
    compose,
    geodesic_distance,
    inverse,
    translation_distance,
)
from i2a.clouds import PointCloud, apply_transform

from helpers import random_pose


def test_compose_identity():
    rng = np.random.default_rng(0)
    p = random_pose(rng)
    q = compose(Pose.identity(), p)
    np.testing.assert_allclose(q.as_matrix(), p.as_matrix(), atol=1e-12)


def test_compose_inverse_is_identity():
    rng = np.random.default_rng(1)
    p = random_pose(rng)
    q = compose(p, inverse(p))
    np.testing.assert_allclose(q.as_matrix(), np.eye(4), atol=1e-9)


def test_compose_matches_matrix_product():
    # Rz(90deg) with t=(1,0,0), composed with Rz(90deg): multiply the 4x4
    # homogeneous matrices by hand and compare.
    a = Pose(Rotation.about_z(np.pi / 2), np.array([1.0, 0.0, 0.0]))
    b = Pose(Rotation.about_z(np.pi / 2), np.zeros(3))
    expected = a.as_matrix() @ b.as_matrix()
    got = compose(a, b).as_matrix()
    np.testing.assert_allclose(got, expected, atol=1e-12)
    np.testing.assert_allclose(got[:3, :3], Rotation.about_z(np.pi).m, atol=1e-12)
    np.testing.assert_allclose(got[:3, 3], [1.0, 0.0, 0.0], atol=1e-12)


def test_inverse_examples():
    assert np.allclose(inverse(Pose.identity()).as_matrix(), np.eye(4))
    p = Pose(Rotation.identity(), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(inverse(p).translation, [-1.0, -2.0, -3.0])
    q = Pose(Rotation.about_z(np.pi / 2), np.array([1.0, 0.0, 0.0]))
    expected = np.linalg.inv(q.as_matrix())
    np.testing.assert_allclose(inverse(q).as_matrix(), expected, atol=1e-12)
    np.testing.assert_allclose(inverse(q).translation, [0.0, 1.0, 0.0], atol=1e-12)


def test_group_laws_random():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = compose(compose(a, b), c).as_matrix()
        right = compose(a, compose(b, c)).as_matrix()
        np.testing.assert_allclose(left, right, atol=1e-9)
        np.testing.assert_allclose(compose(a, inverse(a)).as_matrix(), np.eye(4), atol=1e-9)


def test_pose_apply_matches_matrix():
    rng = np.random.default_rng(3)
    p = random_pose(rng)
    x = rng.normal(size=(10, 3))
    hom = np.concatenate([x, np.ones((10, 1))], axis=1)
    expected = (p.as_matrix() @ hom.T).T[:, :3]
    np.testing.assert_allclose(p.apply(x), expected, atol=1e-12)


def test_rotation_rejects_reflection():
    m = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        Rotation(m)


def test_rotation_renormalizes_noisy_matrix():
    rng = np.random.default_rng(4)
    r = Rotation.random(rng)
    noisy = r.m + rng.normal(0, 1e-4, (3, 3))
    fixed = Rotation(noisy)
    err = np.abs(fixed.m.T @ fixed.m - np.eye(3)).max()
    assert err <= 1e-9
    assert np.linalg.det(fixed.m) == pytest.approx(1.0, abs=1e-9)


def test_geodesic_examples():
    rng = np.random.default_rng(5)
    r = Rotation.random(rng)
    assert geodesic_distance(r, r) == pytest.approx(0.0, abs=1e-7)
    assert geodesic_distance(Rotation.identity(), Rotation.about_z(np.pi / 2)) == pytest.approx(np.pi / 2)
    assert geodesic_distance(Rotation.identity(), Rotation.about_z(np.pi)) == pytest.approx(np.pi)


def test_geodesic_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        r1, r2, r3 = (Rotation.random(rng) for _ in range(3))
        d12 = geodesic_distance(r1, r2)
        assert d12 == pytest.approx(geodesic_distance(r2, r1), abs=1e-12)
        assert 0.0 <= d12 <= np.pi
        assert geodesic_distance(r1, r3) <= d12 + geodesic_distance(r2, r3) + 1e-7


def test_translation_distance():
    assert translation_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert translation_distance([0, 0, 0], [0.01, 0, 0]) == pytest.approx(0.01)
    assert translation_distance([1, 2, 3], [4, 6, 3]) == pytest.approx(5.0)


def test_scale_transform_matrix():
    s = ScaleTransform(2.5)
    np.testing.assert_allclose(s.as_matrix(), np.diag([2.5, 2.5, 2.5, 1.0]))
    with pytest.raises(ValueError):
        ScaleTransform(0.0)
    with pytest.raises(ValueError):
        ScaleTransform(-1.0)


def test_apply_transform_examples():
    cloud = PointCloud(np.array([[1.0, 1.0, 1.0]]), np.array([[0.2, 0.4, 0.6]]), np.array([7], dtype=np.uint32))
    same = apply_transform(Pose.identity(), ScaleTransform(1.0), cloud)
    np.testing.assert_allclose(same.points, cloud.points)
    np.testing.assert_allclose(same.colors, cloud.colors)
    assert same.labels[0] == 7

    scaled = apply_transform(Pose.identity(), ScaleTransform(2.0), cloud)
    np.testing.assert_allclose(scaled.points, [[2.0, 2.0, 2.0]])

    p = Pose(Rotation.about_z(np.pi / 2), np.array([0.0, 0.0, 1.0]))
    moved = apply_transform(p, ScaleTransform(1.0), PointCloud(np.array([[1.0, 0.0, 0.0]])))
    np.testing.assert_allclose(moved.points, [[0.0, 1.0, 1.0]], atol=1e-12)


def test_apply_transform_empty_cloud():
    out = apply_transform(Pose.identity(), ScaleTransform(1.0), PointCloud.empty())
    assert len(out) == 0


def test_rigidity_preserves_pairwise_distances():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(40, 3))
    cloud = PointCloud(pts)
    p = random_pose(rng)
    moved = apply_transform(p, ScaleTransform(1.0), cloud)
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(moved.points[:, None] - moved.points[None], axis=-1)
    np.testing.assert_allclose(d0, d1, atol=1e-9)
