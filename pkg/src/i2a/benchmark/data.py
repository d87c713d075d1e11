"""Demonstration datasets on disk.

A dataset directory holds one subdirectory per demonstration (observation
containers plus a JSON record of actions and ground truth) and a manifest
listing every file with its sha256, so training can detect corruption. All
files are byte-stable: regenerating with the same seed rewrites identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..cloud_io import observation_from_bytes, observation_to_bytes
from ..geometry import Pose
from .expert import Demonstration, GroundTruth

MANIFEST_NAME = "manifest.json"
DATASET_FORMAT = "i2a-dataset"
DATASET_VERSION = 1


class ChecksumMismatchError(Exception):
    """A dataset file does not match the manifest checksum."""


def _pose_json(p: Pose) -> list:
    return p.as_matrix().tolist()


def _pose_from_json(m) -> Pose:
    return Pose.from_matrix(np.array(m))


def _demo_record(demo: Demonstration) -> dict:
    gt = demo.ground_truth
    return {
        "task_id": demo.task_id,
        "actions": [_pose_json(a) for a in demo.actions],
        "gripper": [bool(g) for g in demo.gripper],
        "grasp_index": demo.grasp_index,
        "object_poses": [_pose_json(p) for p in demo.object_poses],
        "final_object_pose": _pose_json(demo.final_object_pose),
        "ground_truth": {
            "anchor_pose": _pose_json(gt.anchor_pose),
            "action_init_pose": _pose_json(gt.action_init_pose),
            "action_goal_pose": _pose_json(gt.action_goal_pose),
            "grasp_offset": _pose_json(gt.grasp_offset),
        },
    }


def _demo_from_record(rec: dict, observations) -> Demonstration:
    gt = rec["ground_truth"]
    return Demonstration(
        task_id=rec["task_id"],
        observations=tuple(observations),
        actions=tuple(_pose_from_json(a) for a in rec["actions"]),
        gripper=np.array(rec["gripper"], dtype=bool),
        grasp_index=int(rec["grasp_index"]),
        object_poses=tuple(_pose_from_json(p) for p in rec["object_poses"]),
        final_object_pose=_pose_from_json(rec["final_object_pose"]),
        ground_truth=GroundTruth(
            anchor_pose=_pose_from_json(gt["anchor_pose"]),
            action_init_pose=_pose_from_json(gt["action_init_pose"]),
            action_goal_pose=_pose_from_json(gt["action_goal_pose"]),
            grasp_offset=_pose_from_json(gt["grasp_offset"]),
        ),
    )


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_dataset(demos: list[Demonstration], out_dir, task_id: str, seed: int) -> dict:
    """Write demonstrations plus the manifest; returns the manifest dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, demo in enumerate(demos):
        sub = out_dir / f"demo_{i:04d}"
        sub.mkdir(exist_ok=True)
        files = []
        for t, obs in enumerate(demo.observations):
            data = observation_to_bytes(obs)
            path = sub / f"obs_{t:02d}.i2o"
            path.write_bytes(data)
            files.append({"path": f"{sub.name}/{path.name}", "sha256": _sha256(data)})
        record = json.dumps(_demo_record(demo), sort_keys=True, indent=1).encode("utf-8")
        (sub / "demo.json").write_bytes(record)
        files.append({"path": f"{sub.name}/demo.json", "sha256": _sha256(record)})
        entries.append({"name": sub.name, "num_steps": len(demo), "files": files})
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "task_id": task_id,
        "seed": seed,
        "num_demos": len(demos),
        "demos": entries,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def load_dataset(path, verify: bool = True) -> tuple[list[Demonstration], dict]:
    path = Path(path)
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path} is not a dataset directory")
    demos = []
    for entry in manifest["demos"]:
        observations = []
        record = None
        for f in entry["files"]:
            data = (path / f["path"]).read_bytes()
            if verify and _sha256(data) != f["sha256"]:
                raise ChecksumMismatchError(f"{f['path']}: checksum mismatch")
            if f["path"].endswith(".i2o"):
                observations.append(observation_from_bytes(data)[0])
            else:
                record = json.loads(data.decode("utf-8"))
        demos.append(_demo_from_record(record, observations))
    return demos, manifest
