"""Imagined-goal construction.

Four adapter interfaces stand in for the external generative models that a
real deployment would call (image editing, open-vocabulary segmentation,
single-view 3D reconstruction, 6D pose estimation). The oracle
implementations shipped here answer from scene ground truth perturbed by
configurable noise, so the downstream pipeline can be exercised and
calibrated without any model weights.

Assembly follows the decomposition

    goal cloud = background  U  (anchor_pose . scale . foreground)

where the foreground is reconstructed in an anchor-local canonical frame and
the (estimated) anchor pose plus a uniform scale place it back in the world.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cameras import CameraModel, SceneObservation, SegmentNotFoundError, project, unproject
from .clouds import PointCloud, apply_transform, concat_clouds
from .geometry import Pose, Rotation, ScaleTransform, compose, inverse
from .registration import RegistrationResult, icp_register, kabsch_register
from .rng import rng_for


class UnknownTaskError(Exception):
    """Instruction does not name a task the adapter can imagine."""


@dataclass(frozen=True)
class AdapterNoise:
    """Generative-error model for the oracle adapters.

    Pose perturbations pick a uniform random direction/axis with a
    half-normal magnitude scaled so its mean equals the sigma, so e.g.
    sigma_trans = 5 mm displaces centroids by 5 mm on average. Dropout
    removes foreground points during segmentation; outliers replace
    reconstructed points with uniform draws inside the scene bounds.
    """

    sigma_rot: float = 0.0
    sigma_trans: float = 0.0
    dropout_frac: float = 0.0
    outlier_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rot < 0 or self.sigma_trans < 0:
            raise ValueError("noise sigmas must be non-negative")
        for f in (self.dropout_frac, self.outlier_frac):
            if not 0.0 <= f < 1.0:
                raise ValueError("fractions must lie in [0, 1)")


def perturb_pose(pose: Pose, sigma_rot: float, sigma_trans: float, rng: np.random.Generator) -> Pose:
    """Random left-perturbation with mean geodesic/translation error = sigma."""
    rot = pose.rotation
    if sigma_rot > 0:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = abs(rng.normal()) * sigma_rot * np.sqrt(np.pi / 2.0)
        rot = Rotation.from_rotvec(axis * angle) @ rot
    t = pose.translation
    if sigma_trans > 0:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        t = t + direction * abs(rng.normal()) * sigma_trans * np.sqrt(np.pi / 2.0)
    return Pose(rot, t)


@dataclass(frozen=True)
class SegmentationOutcome:
    """Foreground/background split of an imagined observation.

    The background cloud comes from the initial observation (only
    task-relevant objects are imagined as moved); the foreground cloud lives
    in the reconstruction frame.
    """

    foreground_ids: frozenset
    background_cloud: PointCloud
    foreground_cloud: PointCloud

    def __post_init__(self):
        if self.background_cloud.labels is not None and len(self.background_cloud) > 0:
            bg = set(np.unique(self.background_cloud.labels).tolist())
            if bg & set(self.foreground_ids):
                raise ValueError("background carries foreground labels")


@dataclass(frozen=True)
class ImaginedGoal:
    """Assembled goal: cloud, its re-render and the transforms used."""

    cloud: PointCloud
    observation: SceneObservation
    anchor_pose: Pose
    scale: ScaleTransform
    object_transform: Optional[RegistrationResult] = None


class ImageEditorAdapter(ABC):
    @abstractmethod
    def imagine(self, obs: SceneObservation, instruction: str) -> SceneObservation:
        """Goal-state observation from the same viewpoint as `obs`."""


class SegmenterAdapter(ABC):
    @abstractmethod
    def segment(self, obs: SceneObservation, instruction: str) -> SegmentationOutcome:
        """Foreground objects named by the instruction vs. the background."""


class ReconstructorAdapter(ABC):
    @abstractmethod
    def reconstruct(self, obs: SceneObservation, foreground_ids) -> PointCloud:
        """Foreground point cloud in the reconstruction canonical frame."""


class PoseEstimatorAdapter(ABC):
    @abstractmethod
    def estimate_anchor(self, obs: SceneObservation, anchor_id: int) -> Pose:
        """6D pose of the anchor object in the world frame."""


@dataclass(frozen=True)
class OracleWorld:
    """Ground truth an oracle adapter set answers from."""

    task_id: str
    camera: CameraModel
    initial_observation: SceneObservation
    background_cloud: PointCloud  # static scene part, world frame
    anchor_model: PointCloud
    anchor_pose: Pose
    action_model: PointCloud
    action_init_pose: Pose
    action_goal_pose: Pose
    bounds: tuple
    action_id: int
    anchor_id: int
    recon_scale: float = 1.0  # metric ambiguity of the emitted reconstruction


class OracleAdapterSet:
    """The four oracles bound to one scene, sharing a seeded noise stream.

    Instances are stateful (the imagined goal pose and segmentation masks
    flow between stages) and not reentrant; use one per pipeline invocation.
    """

    def __init__(self, world: OracleWorld, noise: AdapterNoise):
        self.world = world
        self.noise = noise
        self.rng = rng_for(noise.seed, world.task_id, "oracle-adapters")
        self.imagined_goal_pose: Optional[Pose] = None
        self._kept_action_index: Optional[np.ndarray] = None
        self._segmented_fore: Optional[PointCloud] = None
        self._recon_cloud: Optional[PointCloud] = None
        self._recon_action_mask: Optional[np.ndarray] = None
        self.image_editor = _OracleImageEditor(self)
        self.segmenter = _OracleSegmenter(self)
        self.reconstructor = _OracleReconstructor(self)
        self.pose_estimator = _OraclePoseEstimator(self)

    # -- internals shared by the stage oracles ------------------------------
    def _require_imagined(self) -> Pose:
        if self.imagined_goal_pose is None:
            # segmentation/reconstruction without a prior imagine() call runs
            # on the unperturbed ground-truth goal
            self.imagined_goal_pose = perturb_pose(
                self.world.action_goal_pose, self.noise.sigma_rot, self.noise.sigma_trans, self.rng
            )
        return self.imagined_goal_pose

    def _foreground_world(self) -> tuple[PointCloud, np.ndarray]:
        """Full foreground at the imagined configuration, plus action mask."""
        goal_pose = self._require_imagined()
        anchor = apply_transform(self.world.anchor_pose, ScaleTransform(1.0), self.world.anchor_model)
        action = apply_transform(goal_pose, ScaleTransform(1.0), self.world.action_model)
        cloud = concat_clouds([anchor, action])
        mask = np.zeros(len(cloud), dtype=bool)
        mask[len(anchor):] = True
        return cloud, mask

    def _to_recon_frame(self, points: np.ndarray) -> np.ndarray:
        local = inverse(self.world.anchor_pose).apply(points)
        return local / self.world.recon_scale

    def corresponded_action_clouds(self, anchor_pose_est: Pose, scale: ScaleTransform):
        """Index-corresponded initial/imagined clouds of the action object.

        Sources are the canonical model points surviving segmentation
        dropout at the initial pose; destinations are the same points as
        they appear in the assembled goal (including outlier corruption and
        the estimated anchor pose), so registration sees exactly the noise
        the pipeline produced.
        """
        if self._recon_cloud is None:
            raise RuntimeError("reconstruct() must run before registration")
        src_pts = self.world.action_init_pose.apply(
            self.world.action_model.points[self._kept_action_index]
        )
        dst_local = self._recon_cloud.points[self._recon_action_mask]
        dst_pts = anchor_pose_est.apply(scale.apply(dst_local))
        return PointCloud(src_pts), PointCloud(dst_pts)


class _OracleImageEditor(ImageEditorAdapter):
    def __init__(self, shared: OracleAdapterSet):
        self.s = shared

    def imagine(self, obs, instruction):
        w = self.s.world
        if instruction != w.task_id:
            raise UnknownTaskError(f"instruction {instruction!r} does not name task {w.task_id!r}")
        noise = self.s.noise
        self.s.imagined_goal_pose = perturb_pose(
            w.action_goal_pose, noise.sigma_rot, noise.sigma_trans, self.s.rng
        )
        cloud = concat_clouds(
            [
                w.background_cloud,
                apply_transform(w.anchor_pose, ScaleTransform(1.0), w.anchor_model),
                apply_transform(self.s.imagined_goal_pose, ScaleTransform(1.0), w.action_model),
            ]
        )
        return project(cloud, obs.camera)


class _OracleSegmenter(SegmenterAdapter):
    def __init__(self, shared: OracleAdapterSet):
        self.s = shared

    def segment(self, obs, instruction):
        w = self.s.world
        present = set(np.unique(obs.segmentation[obs.valid_mask]).tolist())
        for needed in (w.action_id, w.anchor_id):
            if needed not in present:
                raise SegmentNotFoundError(f"segment {needed} missing from imagined observation")
        fg = frozenset({w.action_id, w.anchor_id})
        init = w.initial_observation
        bg_mask = ~np.isin(init.segmentation, list(fg))
        background = unproject(init, bg_mask)
        fore_world, action_mask = self.s._foreground_world()
        keep = np.ones(len(fore_world), dtype=bool)
        if self.s.noise.dropout_frac > 0:
            keep = self.s.rng.random(len(fore_world)) >= self.s.noise.dropout_frac
        n_anchor = int((~action_mask).sum())
        self.s._kept_action_index = np.flatnonzero(keep[n_anchor:])
        fore = fore_world.select(keep)
        fore = PointCloud(self.s._to_recon_frame(fore.points), fore.colors, fore.labels)
        self.s._segmented_fore = fore
        self.s._recon_action_mask = action_mask[keep]
        return SegmentationOutcome(fg, background, fore)


class _OracleReconstructor(ReconstructorAdapter):
    def __init__(self, shared: OracleAdapterSet):
        self.s = shared

    def reconstruct(self, obs, foreground_ids):
        w = self.s.world
        if not foreground_ids:
            raise SegmentNotFoundError("empty foreground")
        if self.s._segmented_fore is None:
            self.s.segmenter.segment(obs, w.task_id)
        segmented = self.s._segmented_fore
        pts = segmented.points.copy()
        if self.s.noise.outlier_frac > 0:
            lo = np.asarray(w.bounds[0])
            hi = np.asarray(w.bounds[1])
            hit = self.s.rng.random(len(pts)) < self.s.noise.outlier_frac
            outliers_world = self.s.rng.uniform(lo, hi, (int(hit.sum()), 3))
            pts[hit] = self.s._to_recon_frame(outliers_world)
        cloud = PointCloud(pts, segmented.colors, segmented.labels)
        self.s._recon_cloud = cloud
        return cloud


class _OraclePoseEstimator(PoseEstimatorAdapter):
    def __init__(self, shared: OracleAdapterSet):
        self.s = shared

    def estimate_anchor(self, obs, anchor_id):
        present = set(np.unique(obs.segmentation[obs.valid_mask]).tolist())
        if anchor_id not in present:
            raise SegmentNotFoundError(f"anchor segment {anchor_id} not visible")
        return perturb_pose(
            self.s.world.anchor_pose, self.s.noise.sigma_rot, self.s.noise.sigma_trans, self.s.rng
        )


def assemble_goal(
    background: PointCloud,
    foreground: PointCloud,
    anchor_pose: Pose,
    scale: ScaleTransform,
    cam: CameraModel,
) -> ImaginedGoal:
    """Union of the background with the re-posed, re-scaled foreground."""
    placed = apply_transform(anchor_pose, scale, foreground)
    cloud = concat_clouds([background, placed]) if len(foreground) else background
    return ImaginedGoal(cloud, project(cloud, cam), anchor_pose, scale)


def imagine_goal(
    adapters,
    initial_obs: SceneObservation,
    instruction: str,
    scale: ScaleTransform,
    action_id: int,
    anchor_id: int,
) -> ImaginedGoal:
    """Full pipeline: imagine, segment, reconstruct, estimate, assemble.

    Registration of the action object's motion uses index-corresponded
    clouds when the adapter set provides them (the oracles do); otherwise it
    falls back to segment-extraction plus nearest-neighbor refinement.
    """
    imagined = adapters.image_editor.imagine(initial_obs, instruction)
    seg = adapters.segmenter.segment(imagined, instruction)
    fore = adapters.reconstructor.reconstruct(imagined, seg.foreground_ids)
    anchor_pose = adapters.pose_estimator.estimate_anchor(initial_obs, anchor_id)
    goal = assemble_goal(seg.background_cloud, fore, anchor_pose, scale, initial_obs.camera)
    if hasattr(adapters, "corresponded_action_clouds"):
        src, dst = adapters.corresponded_action_clouds(anchor_pose, scale)
        reg = kabsch_register(src, dst)
    else:
        from .registration import extract_object_cloud

        src = extract_object_cloud(initial_obs, action_id)
        dst = extract_object_cloud(goal.observation, action_id)
        reg = icp_register(src, dst)
    return replace(goal, object_transform=reg)
