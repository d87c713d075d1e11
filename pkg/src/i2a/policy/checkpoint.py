"""Checkpoints: a JSON manifest plus one little-endian f32 weight blob.

The manifest records array names, shapes and float offsets, the policy and
loss configuration, the seed and the epoch counter; optimizer slots are
stored alongside the weights so training can resume mid-run and replay the
original trace.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..consistency import LossConfig
from .nets import Adam
from .params import PolicyConfig, PolicyParams

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
CHECKPOINT_FORMAT = "i2a-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointIncompatibleError(Exception):
    pass


def _collect(params: PolicyParams, opt: Adam | None) -> dict[str, np.ndarray]:
    arrays = dict(params.arrays())
    if opt is not None:
        for k, v in opt.m.items():
            arrays[f"opt.m.{k}"] = v
        for k, v in opt.v.items():
            arrays[f"opt.v.{k}"] = v
    return arrays


def save_checkpoint(
    path,
    params: PolicyParams,
    cfg: PolicyConfig,
    loss_cfg: LossConfig,
    seed: int,
    epoch: int,
    opt: Adam | None = None,
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = _collect(params, opt)
    manifest_arrays = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name].astype("<f4")
        manifest_arrays.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    blob = b"".join(blobs)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_json(),
        "loss": asdict(loss_cfg),
        "seed": seed,
        "epoch": epoch,
        "adam_step": 0 if opt is None else opt.step_count,
        "has_optimizer": opt is not None,
        "arrays": manifest_arrays,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    (path / WEIGHTS_NAME).write_bytes(blob)
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path, expected_cfg: PolicyConfig | None = None):
    """Returns (params, cfg, loss_cfg, manifest, optimizer-or-None)."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointIncompatibleError(f"cannot read manifest: {e}") from e
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointIncompatibleError("not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointIncompatibleError(f"unsupported checkpoint version {manifest.get('version')}")
    cfg = PolicyConfig.from_json(manifest["config"])
    if expected_cfg is not None and cfg != expected_cfg:
        raise CheckpointIncompatibleError(
            f"checkpoint config {cfg} does not match requested config {expected_cfg}"
        )
    loss_cfg = LossConfig(**manifest["loss"])
    blob = (manifest_path.parent / WEIGHTS_NAME).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointIncompatibleError("weight blob checksum mismatch")
    flat = np.frombuffer(blob, dtype="<f4")
    values = {}
    for entry in manifest["arrays"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = flat[entry["offset"] : entry["offset"] + size].astype(np.float64).reshape(entry["shape"])
        values[entry["name"]] = arr
    params = PolicyParams.initialize(cfg, seed=0)
    params.load_arrays({k: v for k, v in values.items() if not k.startswith("opt.")})
    opt = None
    if manifest.get("has_optimizer"):
        opt = Adam(params.arrays(), lr=cfg.learning_rate)
        opt.step_count = int(manifest["adam_step"])
        for k in opt.m:
            opt.m[k][...] = values[f"opt.m.{k}"]
            opt.v[k][...] = values[f"opt.v.{k}"]
    return params, cfg, loss_cfg, manifest, opt
