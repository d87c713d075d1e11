"""Task definitions: shapes, goal relations, tolerances and the camera.

Three relational-rearrangement families cover the precision axes: peg-in-hole
stresses translation, plate-in-slot stresses rotation, cup-on-hook both. A
goal relation anchors the target position in the anchor's frame; its rotation
is anchor-relative where the anchor's yaw constrains the object (slot, hook)
and world-fixed for the rotation-symmetric peg.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cameras import CameraModel, look_at
from ..clouds import PointCloud
from ..geometry import Pose, Rotation
from . import shapes

TABLE_LABEL = 1
ACTION_LABEL = 2
ANCHOR_LABEL = 3

TABLE_SIZE = (0.62, 0.46)
TABLE_SPACING = 0.008
TABLE_COLOR = (0.55, 0.52, 0.48)
ACTION_COLOR = (0.85, 0.15, 0.15)
ANCHOR_COLOR = (0.2, 0.35, 0.8)

HOME_POSE = Pose(Rotation.identity(), np.array([0.0, -0.05, 0.28]))


def default_camera(resolution: int = 128) -> CameraModel:
    return CameraModel(
        fx=float(resolution), fy=float(resolution),
        cx=resolution / 2.0, cy=resolution / 2.0,
        width=resolution, height=resolution,
        extrinsic=look_at([0.0, -0.55, 0.45], [0.0, 0.0, 0.05]),
    )


@dataclass(frozen=True)
class TaskSpec:
    """Geometry and evaluation contract of one task family."""

    task_id: str
    action_shape: dict
    anchor_shape: dict
    goal_offset: tuple[float, float, float]
    goal_rotation: Rotation
    goal_rotation_frame: str  # "anchor" or "world"
    trans_tol: float
    rot_tol: float
    bounds: tuple = ((-0.28, -0.2, 0.0), (0.28, 0.2, 0.3))
    anchor_region: tuple = ((-0.13, -0.08), (0.13, 0.08))
    anchor_yaw_range: tuple = (-np.pi, np.pi)
    min_separation: float = 0.16
    grasp_local: Pose = HOME_POSE  # overwritten by builders
    point_spacing: float = 0.003
    resolution: int = 128

    def __post_init__(self):
        if self.trans_tol <= 0 or self.rot_tol <= 0:
            raise ValueError("success tolerances must be positive")
        if self.goal_rotation_frame not in ("anchor", "world"):
            raise ValueError(f"bad goal rotation frame {self.goal_rotation_frame}")

    @property
    def camera(self) -> CameraModel:
        return default_camera(self.resolution)

    def goal_pose(self, anchor_pose: Pose) -> Pose:
        """World goal pose of the action object for a given anchor pose."""
        pos = anchor_pose.apply(np.asarray(self.goal_offset))
        if self.goal_rotation_frame == "anchor":
            rot = anchor_pose.rotation @ self.goal_rotation
        else:
            rot = self.goal_rotation
        return Pose(rot, pos)


def _labeled(points: np.ndarray, color, label: int) -> PointCloud:
    n = len(points)
    return PointCloud(points, np.tile(np.asarray(color), (n, 1)), np.full(n, label, dtype=np.uint32))


def action_model(spec: TaskSpec) -> PointCloud:
    s = spec.action_shape
    kind = s["kind"]
    if kind == "peg":
        pts = shapes.cylinder_cloud(s["radius"], s["height"], spec.point_spacing)
    elif kind == "plate":
        pts = shapes.cylinder_cloud(s["radius"], s["thickness"], spec.point_spacing)
    elif kind == "cup":
        pts = shapes.cup_with_handle_cloud(
            s["radius"], s["height"], s["handle_radius"], s["handle_tube"], spec.point_spacing
        )
    else:
        raise ValueError(f"unknown action shape {kind}")
    return _labeled(pts, ACTION_COLOR, ACTION_LABEL)


def anchor_model(spec: TaskSpec) -> PointCloud:
    s = spec.anchor_shape
    kind = s["kind"]
    if kind == "hole_block":
        pts = shapes.block_with_hole_cloud(
            s["size_x"], s["size_y"], s["size_z"],
            s["hole_radius"], (s["hole_x"], s["hole_y"]), s["hole_depth"], spec.point_spacing
        )
    elif kind == "slotted_rack":
        pts = shapes.slotted_rack_cloud(
            s["base_x"], s["base_y"], s["base_z"],
            s["post_x"], s["post_y"], s["post_z"], s["gap"], spec.point_spacing
        )
    elif kind == "hook_stand":
        pts = shapes.hook_stand_cloud(
            s["post_x"], s["post_y"], s["post_z"],
            s["arm_radius"], s["arm_length"], s["arm_height"], spec.point_spacing
        )
    else:
        raise ValueError(f"unknown anchor shape {kind}")
    return _labeled(pts, ANCHOR_COLOR, ANCHOR_LABEL)


def table_model() -> PointCloud:
    pts = shapes.table_cloud(*TABLE_SIZE, TABLE_SPACING)
    return _labeled(pts, TABLE_COLOR, TABLE_LABEL)


def peg_in_hole() -> TaskSpec:
    peg_r, peg_h = 0.012, 0.08
    hole_r, hole_depth = 0.02, 0.035
    block = dict(kind="hole_block", size_x=0.15, size_y=0.15, size_z=0.05,
                 hole_radius=hole_r, hole_x=0.05, hole_y=0.0, hole_depth=hole_depth)
    insert_z = block["size_z"] - hole_depth + 0.002
    spec = TaskSpec(
        task_id="peg-in-hole",
        action_shape=dict(kind="peg", radius=peg_r, height=peg_h),
        anchor_shape=block,
        goal_offset=(block["hole_x"], block["hole_y"], insert_z),
        goal_rotation=Rotation.identity(),
        goal_rotation_frame="world",  # the peg is rotation-symmetric
        trans_tol=0.005,
        rot_tol=0.05,
        grasp_local=Pose(Rotation.identity(), np.array([0.0, 0.0, peg_h])),
    )
    # Collision-free at the tolerance boundary: lateral offset plus the tilt
    # sweep over the inserted length must stay inside the radial clearance.
    inserted = block["size_z"] - insert_z
    assert hole_r - peg_r > spec.trans_tol + spec.rot_tol * inserted + 1e-4
    return spec


def plate_in_slot() -> TaskSpec:
    plate_r, plate_t = 0.05, 0.006
    rack = dict(kind="slotted_rack", base_x=0.16, base_y=0.1, base_z=0.02,
                post_x=0.012, post_y=0.1, post_z=0.07, gap=0.02)
    spec = TaskSpec(
        task_id="plate-in-slot",
        action_shape=dict(kind="plate", radius=plate_r, thickness=plate_t),
        anchor_shape=rack,
        # Upright disk standing in the slot: thickness along the slot x-axis,
        # bottom rim just above the base plate.
        goal_offset=(-plate_t / 2.0, 0.0, rack["base_z"] + plate_r + 0.004),
        goal_rotation=Rotation.about_y(np.pi / 2.0),
        goal_rotation_frame="anchor",
        trans_tol=0.004,
        rot_tol=0.03,
        anchor_yaw_range=(-0.6, 0.6),
        grasp_local=Pose(Rotation.identity(), np.array([plate_r - 0.01, 0.0, plate_t])),
    )
    assert (rack["gap"] - plate_t) / 2.0 > spec.trans_tol + spec.rot_tol * plate_r + 1e-4
    return spec


def cup_on_hook() -> TaskSpec:
    cup_r, cup_h = 0.03, 0.05
    handle_r, handle_tube = 0.009, 0.004
    hook = dict(kind="hook_stand", post_x=0.02, post_y=0.02, post_z=0.12,
                arm_radius=0.0035, arm_length=0.05, arm_height=0.1)
    arm_mid = hook["post_x"] / 2.0 + 0.6 * hook["arm_length"]
    spec = TaskSpec(
        task_id="cup-on-hook",
        action_shape=dict(kind="cup", radius=cup_r, height=cup_h,
                          handle_radius=handle_r, handle_tube=handle_tube),
        anchor_shape=hook,
        # Handle ring threaded on the arm: rotate the ring opening onto the
        # arm axis and place its center at the arm midpoint.
        goal_offset=(arm_mid, -(cup_r + handle_r), hook["arm_height"] - cup_h / 2.0),
        goal_rotation=Rotation.about_z(np.pi / 2.0),
        goal_rotation_frame="anchor",
        trans_tol=0.005,
        rot_tol=0.05,
        anchor_yaw_range=(-0.7, 0.7),
        grasp_local=Pose(Rotation.identity(), np.array([0.0, 0.0, cup_h])),
    )
    assert handle_r - hook["arm_radius"] > spec.trans_tol + 1e-4
    return spec


TASK_BUILDERS = {
    "peg-in-hole": peg_in_hole,
    "plate-in-slot": plate_in_slot,
    "cup-on-hook": cup_on_hook,
}


def get_task(task_id: str) -> TaskSpec:
    if task_id not in TASK_BUILDERS:
        raise KeyError(f"unknown task {task_id!r}; available: {sorted(TASK_BUILDERS)}")
    return TASK_BUILDERS[task_id]()


def task_index(task_id: str) -> int:
    """Stable integer id used for the language embedding."""
    return sorted(TASK_BUILDERS).index(task_id)
