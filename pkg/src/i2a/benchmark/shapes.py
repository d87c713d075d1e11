"""Deterministic surface point samplers for the synthetic objects.

Every sampler returns canonical-frame points on a parametric grid with the
requested spacing, so model clouds are reproducible functions of the shape
parameters alone. Conventions: object +z is up and the origin sits at the
base center, so an object resting on the table has pose translation z = 0.
"""

from __future__ import annotations

import numpy as np


def _ring(radius: float, z: float, spacing: float) -> np.ndarray:
    n = max(8, int(np.ceil(2.0 * np.pi * radius / spacing)))
    a = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([radius * np.cos(a), radius * np.sin(a), np.full(n, z)], axis=1)


def _disk(radius: float, z: float, spacing: float, hole_radius: float = 0.0) -> np.ndarray:
    rows = [np.array([[0.0, 0.0, z]])] if hole_radius == 0.0 else []
    r = spacing
    while r <= radius + 1e-12:
        if r > hole_radius:
            rows.append(_ring(r, z, spacing))
        r += spacing
    return np.concatenate(rows) if rows else np.zeros((0, 3))


def cylinder_cloud(radius: float, height: float, spacing: float) -> np.ndarray:
    """Closed cylinder, axis +z, base at z = 0."""
    n_z = max(2, int(np.ceil(height / spacing)) + 1)
    zs = np.linspace(0.0, height, n_z)
    wall = np.concatenate([_ring(radius, z, spacing) for z in zs])
    return np.concatenate([wall, _disk(radius, 0.0, spacing), _disk(radius, height, spacing)])


def _face_grid(lo, hi, spacing):
    def axis(a, b):
        n = max(2, int(np.ceil((b - a) / spacing)) + 1)
        return np.linspace(a, b, n)

    return axis(lo[0], hi[0]), axis(lo[1], hi[1])


def box_cloud(size_x: float, size_y: float, size_z: float, spacing: float) -> np.ndarray:
    """Axis-aligned box, base center at the origin, z in [0, size_z]."""
    hx, hy = size_x / 2.0, size_y / 2.0
    faces = []
    xs, ys = _face_grid((-hx, -hy), (hx, hy), spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    for z in (0.0, size_z):
        faces.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1))
    xs, zs = _face_grid((-hx, 0.0), (hx, size_z), spacing)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    for y in (-hy, hy):
        faces.append(np.stack([gx.ravel(), np.full(gx.size, y), gz.ravel()], axis=1))
    ys, zs = _face_grid((-hy, 0.0), (hy, size_z), spacing)
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    for x in (-hx, hx):
        faces.append(np.stack([np.full(gy.size, x), gy.ravel(), gz.ravel()], axis=1))
    return np.concatenate(faces)


def block_with_hole_cloud(
    size_x: float, size_y: float, size_z: float,
    hole_radius: float, hole_center, hole_depth: float, spacing: float,
) -> np.ndarray:
    """Box with a vertical cylindrical bore sunk into the top face."""
    cx, cy = hole_center
    box = box_cloud(size_x, size_y, size_z, spacing)
    on_top = np.isclose(box[:, 2], size_z)
    in_hole = (box[:, 0] - cx) ** 2 + (box[:, 1] - cy) ** 2 < hole_radius**2
    box = box[~(on_top & in_hole)]
    z0 = size_z - hole_depth
    n_z = max(2, int(np.ceil(hole_depth / spacing)) + 1)
    wall = np.concatenate([_ring(hole_radius, z, spacing) for z in np.linspace(z0, size_z, n_z)])
    wall[:, 0] += cx
    wall[:, 1] += cy
    bottom = _disk(hole_radius, z0, spacing)
    bottom[:, 0] += cx
    bottom[:, 1] += cy
    return np.concatenate([box, wall, bottom])


def slotted_rack_cloud(
    base_x: float, base_y: float, base_z: float,
    post_x: float, post_y: float, post_z: float, gap: float, spacing: float,
) -> np.ndarray:
    """A base plate with two posts leaving a slot of width `gap` along x."""
    parts = [box_cloud(base_x, base_y, base_z, spacing)]
    for side in (-1.0, 1.0):
        post = box_cloud(post_x, post_y, post_z, spacing)
        post[:, 0] += side * (gap / 2.0 + post_x / 2.0)
        post[:, 2] += base_z
        parts.append(post)
    return np.concatenate(parts)


def cup_with_handle_cloud(
    radius: float, height: float, handle_radius: float, handle_tube: float, spacing: float,
) -> np.ndarray:
    """Open cup (wall + bottom) with a vertical handle ring on the +x side.

    The ring lies in the xz-plane, so its opening faces +/-y in the
    canonical frame; `handle_radius` is the center-line radius of the ring.
    """
    n_z = max(2, int(np.ceil(height / spacing)) + 1)
    wall = np.concatenate([_ring(radius, z, spacing) for z in np.linspace(0.0, height, n_z)])
    bottom = _disk(radius, 0.0, spacing)
    center = np.array([radius + handle_radius, 0.0, height / 2.0])
    n = max(12, int(np.ceil(2.0 * np.pi * handle_radius / spacing)))
    a = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    rings = []
    for dy in (-handle_tube / 2.0, handle_tube / 2.0):
        ring = np.stack(
            [center[0] + handle_radius * np.cos(a), np.full(n, dy), center[2] + handle_radius * np.sin(a)],
            axis=1,
        )
        rings.append(ring)
    return np.concatenate([wall, bottom, *rings])


def hook_stand_cloud(
    post_x: float, post_y: float, post_z: float,
    arm_radius: float, arm_length: float, arm_height: float, spacing: float,
) -> np.ndarray:
    """Vertical post with a horizontal cylindrical arm pointing along +x."""
    post = box_cloud(post_x, post_y, post_z, spacing)
    n_x = max(2, int(np.ceil(arm_length / spacing)) + 1)
    xs = np.linspace(post_x / 2.0, post_x / 2.0 + arm_length, n_x)
    n = max(8, int(np.ceil(2.0 * np.pi * arm_radius / spacing)))
    a = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    rings = []
    for x in xs:
        rings.append(
            np.stack(
                [np.full(n, x), arm_radius * np.cos(a), arm_height + arm_radius * np.sin(a)], axis=1
            )
        )
    cap = np.array([[post_x / 2.0 + arm_length, 0.0, arm_height]])
    return np.concatenate([post, *rings, cap])


def table_cloud(size_x: float, size_y: float, spacing: float) -> np.ndarray:
    """Flat tabletop at z = 0 centered on the origin."""
    xs = np.arange(-size_x / 2.0, size_x / 2.0 + 1e-12, spacing)
    ys = np.arange(-size_y / 2.0, size_y / 2.0 + 1e-12, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
