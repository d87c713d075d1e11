"""Procedural scene sampling and point-based rendering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cameras import SceneObservation, project
from ..clouds import PointCloud, apply_transform, concat_clouds
from ..geometry import Pose, Rotation, ScaleTransform
from ..rng import rng_for
from .tasks import HOME_POSE, TaskSpec, action_model, anchor_model, table_model

PLACEMENT_ATTEMPTS = 100


class PlacementFailureError(Exception):
    """No collision-free object placement found within the attempt budget."""


@dataclass(frozen=True)
class Scene:
    """A sampled episode: fixed anchor, movable action object, one camera."""

    spec: TaskSpec
    seed: int
    anchor_pose: Pose
    action_init_pose: Pose
    action_goal_pose: Pose
    action_model: PointCloud
    anchor_model: PointCloud
    table: PointCloud
    observation: SceneObservation
    home_pose: Pose

    @property
    def task_id(self) -> str:
        return self.spec.task_id


def _render(spec: TaskSpec, table, anchor_cloud, anchor_pose, action_cloud, action_pose) -> SceneObservation:
    cloud = concat_clouds(
        [
            table,
            apply_transform(anchor_pose, ScaleTransform(1.0), anchor_cloud),
            apply_transform(action_pose, ScaleTransform(1.0), action_cloud),
        ]
    )
    return project(cloud, spec.camera)


def render_state(scene: Scene, action_pose: Pose) -> SceneObservation:
    """Render the scene with the action object at the given pose."""
    return _render(scene.spec, scene.table, scene.anchor_model, scene.anchor_pose,
                   scene.action_model, action_pose)


def goal_observation(scene: Scene) -> SceneObservation:
    """Ground-truth goal render (the Ex1 upper-bound conditioning)."""
    return render_state(scene, scene.action_goal_pose)


def oracle_world(scene: Scene, recon_scale: float = 1.0):
    """Ground-truth context for the oracle goal-synthesis adapters."""
    from ..goal_synthesis import OracleWorld
    from .tasks import ACTION_LABEL, ANCHOR_LABEL

    return OracleWorld(
        task_id=scene.task_id,
        camera=scene.spec.camera,
        initial_observation=scene.observation,
        background_cloud=scene.table,
        anchor_model=scene.anchor_model,
        anchor_pose=scene.anchor_pose,
        action_model=scene.action_model,
        action_init_pose=scene.action_init_pose,
        action_goal_pose=scene.action_goal_pose,
        bounds=scene.spec.bounds,
        action_id=ACTION_LABEL,
        anchor_id=ANCHOR_LABEL,
        recon_scale=recon_scale,
    )


def _footprint_radius(cloud: PointCloud) -> float:
    return float(np.linalg.norm(cloud.points[:, :2], axis=1).max())


def generate_scene(spec: TaskSpec, seed: int) -> Scene:
    """Sample poses for both objects and render the initial observation.

    The anchor pose is held fixed for the whole episode. Sampling rejects
    action placements closer than the separation margin to the anchor or
    outside the workspace; after 100 failures PlacementFailureError is
    raised.
    """
    rng = rng_for(spec.task_id, "scene", seed)
    act_cloud = action_model(spec)
    anc_cloud = anchor_model(spec)
    lo = np.asarray(spec.anchor_region[0])
    hi = np.asarray(spec.anchor_region[1])
    anchor_xy = rng.uniform(lo, hi)
    yaw = rng.uniform(*spec.anchor_yaw_range)
    anchor_pose = Pose(Rotation.about_z(yaw), np.array([anchor_xy[0], anchor_xy[1], 0.0]))

    bounds_lo = np.asarray(spec.bounds[0])
    bounds_hi = np.asarray(spec.bounds[1])
    act_r = _footprint_radius(act_cloud)
    for attempt in range(PLACEMENT_ATTEMPTS):
        xy = rng.uniform(bounds_lo[:2] + act_r, bounds_hi[:2] - act_r)
        if np.linalg.norm(xy - anchor_xy) >= spec.min_separation:
            break
    else:
        raise PlacementFailureError(
            f"no valid placement for {spec.task_id} seed {seed} in {PLACEMENT_ATTEMPTS} attempts"
        )
    action_init = Pose(Rotation.identity(), np.array([xy[0], xy[1], 0.0]))
    action_goal = spec.goal_pose(anchor_pose)

    table = table_model()
    obs = _render(spec, table, anc_cloud, anchor_pose, act_cloud, action_init)
    return Scene(
        spec=spec,
        seed=seed,
        anchor_pose=anchor_pose,
        action_init_pose=action_init,
        action_goal_pose=action_goal,
        action_model=act_cloud,
        anchor_model=anc_cloud,
        table=table,
        observation=obs,
        home_pose=HOME_POSE,
    )
