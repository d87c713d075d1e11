"""Episode execution and success checking.

Execution is kinematic: closing the gripper within the attachment tolerance
of the object's grasp point rigidly attaches the object (constant grasp
offset), opening it releases. A policy therefore succeeds exactly when its
post-grasp relative motion lands the object inside the task tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry import Pose, compose, geodesic_distance, inverse, translation_distance
from ..rng import rng_for, seed_for
from .scenes import Scene, render_state
from .tasks import TaskSpec

# Generous proximity window for a grasp attempt to latch on; missing by more
# than this leaves the object on the table.
ATTACH_TRANS_TOL = 0.02
ATTACH_ROT_TOL = 0.3

EPISODE_HORIZON = 5


def check_success(final_pose: Pose, goal_pose: Pose, spec: TaskSpec) -> bool:
    """Closed-boundary tolerance check against the goal relation."""
    rot_err = geodesic_distance(final_pose.rotation, goal_pose.rotation)
    trans_err = translation_distance(final_pose.translation, goal_pose.translation)
    return rot_err <= spec.rot_tol and trans_err <= spec.trans_tol


def step_object_state(
    spec: TaskSpec, obj_pose: Pose, grasp_offset: Optional[Pose], action: Pose, grip: bool
) -> tuple[Pose, Optional[Pose]]:
    """Advance the object through one executed keypose."""
    if grasp_offset is not None:
        obj_pose = compose(action, grasp_offset)
    if grip and grasp_offset is None:
        grasp_world = compose(obj_pose, spec.grasp_local)
        near = (
            geodesic_distance(action.rotation, grasp_world.rotation) <= ATTACH_ROT_TOL
            and translation_distance(action.translation, grasp_world.translation) <= ATTACH_TRANS_TOL
        )
        if near:
            grasp_offset = compose(inverse(action), obj_pose)
    if not grip:
        grasp_offset = None
    return obj_pose, grasp_offset


def replay_actions(scene: Scene, actions: Sequence[Pose], gripper: Sequence[bool]):
    """Object pose before each action plus the final pose after all of them."""
    obj = scene.action_init_pose
    offset: Optional[Pose] = None
    before = []
    for a, g in zip(actions, gripper):
        before.append(obj)
        obj, offset = step_object_state(scene.spec, obj, offset, a, bool(g))
    return before, obj


class KeyposePolicy:
    """Interface for lockstep episode execution."""

    def act_batch(self, scenes, stage, observations, histories) -> list[tuple[Pose, bool]]:
        raise NotImplementedError


@dataclass(frozen=True)
class EpisodeResult:
    final_pose: Pose
    success: bool
    actions: tuple
    gripper: tuple


def run_episodes(scenes: list[Scene], policy: KeyposePolicy, horizon: int = EPISODE_HORIZON):
    """Execute all episodes in lockstep and score them."""
    n = len(scenes)
    objs = [s.action_init_pose for s in scenes]
    offsets: list[Optional[Pose]] = [None] * n
    histories = [[s.home_pose] for s in scenes]
    trails = [[] for _ in range(n)]
    grips = [[] for _ in range(n)]
    for stage in range(horizon):
        observations = [render_state(s, o) for s, o in zip(scenes, objs)]
        acts = policy.act_batch(scenes, stage, observations, histories)
        for i, (a, g) in enumerate(acts):
            objs[i], offsets[i] = step_object_state(scenes[i].spec, objs[i], offsets[i], a, bool(g))
            histories[i].append(a)
            trails[i].append(a)
            grips[i].append(bool(g))
    results = []
    for i, scene in enumerate(scenes):
        ok = check_success(objs[i], scene.action_goal_pose, scene.spec)
        results.append(EpisodeResult(objs[i], ok, tuple(trails[i]), tuple(grips[i])))
    return results


class RandomPolicy(KeyposePolicy):
    """Uniform random keyposes inside the workspace; the floor baseline."""

    def __init__(self, seed: int):
        self.seed = seed

    def act_batch(self, scenes, stage, observations, histories):
        out = []
        for i, scene in enumerate(scenes):
            rng = rng_for(self.seed, "random-policy", scene.seed, stage)
            lo = np.asarray(scene.spec.bounds[0])
            hi = np.asarray(scene.spec.bounds[1])
            from ..geometry import Rotation

            pose = Pose(Rotation.random(rng), rng.uniform(lo, hi))
            out.append((pose, bool(rng.integers(2))))
        return out


class ExpertPolicy(KeyposePolicy):
    """Replays the scripted expert's keyposes (the oracle upper bound)."""

    def act_batch(self, scenes, stage, observations, histories):
        from .expert import expert_keyposes

        out = []
        for scene in scenes:
            actions, gripper = expert_keyposes(scene)
            out.append((actions[stage], bool(gripper[stage])))
        return out
