"""Imagined-goal rearrangement toolkit."""

from .cameras import CameraModel, SceneObservation, SegmentNotFoundError, look_at, project, unproject
from .clouds import PointCloud, apply_transform, chamfer_distance, concat_clouds, voxel_downsample
from .consistency import LossConfig, TransformationToken, batched_soft_loss, soft_pose_loss
from .geometry import (
    Pose,
    Rotation,
    ScaleTransform,
    compose,
    geodesic_distance,
    inverse,
    translation_distance,
)
from .registration import RegistrationResult, icp_register, kabsch_register

__version__ = "0.1.0"
