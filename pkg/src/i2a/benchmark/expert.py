"""Scripted expert demonstrations.

The expert plans five keyposes from ground truth: approach above the grasp
point, grasp, lift, move above the placement, place-and-release. Because the
final keypose is derived from the true goal pose, the post-grasp relative
transform of a demonstration equals the object's ground-truth transform
exactly; that identity is what the consistency loss supervises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cameras import SceneObservation
from ..geometry import Pose, compose, geodesic_distance, inverse, translation_distance
from .evaluate import check_success, replay_actions
from .scenes import Scene, render_state

GRASP_INDEX = 1
APPROACH_LIFT = 0.08
TRANSIT_LIFT = 0.10


class PlanFailureError(Exception):
    """Expert cannot produce a within-workspace plan for this scene."""


@dataclass(frozen=True)
class GroundTruth:
    anchor_pose: Pose
    action_init_pose: Pose
    action_goal_pose: Pose
    grasp_offset: Pose


@dataclass(frozen=True)
class Demonstration:
    """One expert episode: per-keypose observations, actions and bookkeeping.

    `observations[t]` shows the scene before `actions[t]` executes;
    `object_poses[t]` is the action object's pose in that frame.
    """

    task_id: str
    observations: tuple
    actions: tuple
    gripper: np.ndarray
    grasp_index: int
    object_poses: tuple
    final_object_pose: Pose
    ground_truth: GroundTruth

    def __len__(self) -> int:
        return len(self.actions)


def _raised(p: Pose, dz: float) -> Pose:
    return Pose(p.rotation, p.translation + np.array([0.0, 0.0, dz]))


def expert_keyposes(scene: Scene):
    """The five keyposes plus gripper flags for one scene."""
    grasp_w = compose(scene.action_init_pose, scene.spec.grasp_local)
    # place = goal . init^-1 . grasp: carrying the constant grasp offset, the
    # object lands exactly on its goal pose.
    place_w = compose(compose(scene.action_goal_pose, inverse(scene.action_init_pose)), grasp_w)
    actions = (
        _raised(grasp_w, APPROACH_LIFT),
        grasp_w,
        _raised(grasp_w, TRANSIT_LIFT),
        _raised(place_w, TRANSIT_LIFT),
        place_w,
    )
    gripper = np.array([False, True, True, True, False])
    return actions, gripper


def scripted_expert(scene: Scene) -> Demonstration:
    """Plan, execute and record one demonstration."""
    actions, gripper = expert_keyposes(scene)
    lo = np.asarray(scene.spec.bounds[0])
    hi = np.asarray(scene.spec.bounds[1])
    for a in actions:
        if np.any(a.translation < lo - 1e-9) or np.any(a.translation > hi + 1e-9):
            raise PlanFailureError(
                f"keypose {a.translation} outside workspace for {scene.task_id} seed {scene.seed}"
            )
    before, final = replay_actions(scene, actions, gripper)
    if not check_success(final, scene.action_goal_pose, scene.spec):
        raise PlanFailureError(f"expert failed self-check on {scene.task_id} seed {scene.seed}")
    observations = tuple(
        scene.observation if t == 0 else render_state(scene, before[t]) for t in range(len(actions))
    )
    grasp_w = actions[GRASP_INDEX]
    ground_truth = GroundTruth(
        anchor_pose=scene.anchor_pose,
        action_init_pose=scene.action_init_pose,
        action_goal_pose=scene.action_goal_pose,
        grasp_offset=compose(inverse(grasp_w), scene.action_init_pose),
    )
    return Demonstration(
        task_id=scene.task_id,
        observations=observations,
        actions=actions,
        gripper=gripper,
        grasp_index=GRASP_INDEX,
        object_poses=tuple(before),
        final_object_pose=final,
        ground_truth=ground_truth,
    )


def demonstration_object_transform(demo: Demonstration) -> Pose:
    """Ground-truth object motion from the initial to the goal state."""
    gt = demo.ground_truth
    return compose(gt.action_goal_pose, inverse(gt.action_init_pose))
