"""On-disk formats: ASCII PLY, a compact binary cloud and the RGB-D container.

All binary layouts are little-endian. The observation container is a single
JSON header line followed by raw planes (u8 RGB, f32 depth, u32 segmentation)
and doubles as the wire format of the subprocess adapter protocol.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .cameras import CameraModel, SceneObservation
from .clouds import PointCloud
from .geometry import Pose

CLOUD_MAGIC = b"I2AC"
CLOUD_VERSION = 1
OBSERVATION_FORMAT = "i2a-observation"
OBSERVATION_VERSION = 1


class UnknownFormatError(Exception):
    """File is not one of the artifact formats; carries the byte offset."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _cloud_color_bytes(cloud: PointCloud) -> np.ndarray:
    if cloud.colors is None:
        return np.full((len(cloud), 3), 128, dtype=np.uint8)
    return np.clip(np.round(cloud.colors * 255.0), 0, 255).astype(np.uint8)


def _cloud_labels(cloud: PointCloud) -> np.ndarray:
    if cloud.labels is None:
        return np.zeros(len(cloud), dtype=np.uint32)
    return cloud.labels


def write_ply(cloud: PointCloud, path) -> None:
    """ASCII PLY with per-vertex x y z, uchar RGB and a uint label."""
    colors = _cloud_color_bytes(cloud)
    labels = _cloud_labels(cloud)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property uint label",
        "end_header",
    ]
    for p, c, l in zip(cloud.points, colors, labels):
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]} {c[1]} {c[2]} {l}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise UnknownFormatError(f"{path}: not a PLY file", 0)
    try:
        end = text.index("end_header")
        count_line = next(l for l in text[:end] if l.startswith("element vertex"))
        n = int(count_line.split()[-1])
    except (ValueError, StopIteration):
        raise UnknownFormatError(f"{path}: malformed PLY header", 0) from None
    rows = text[end + 1 : end + 1 + n]
    if len(rows) < n:
        raise UnknownFormatError(f"{path}: truncated PLY body", len("\n".join(text[: end + 1 + len(rows)])))
    pts = np.zeros((n, 3))
    colors = np.zeros((n, 3))
    labels = np.zeros(n, dtype=np.uint32)
    for i, row in enumerate(rows):
        f = row.split()
        pts[i] = [float(f[0]), float(f[1]), float(f[2])]
        colors[i] = [int(f[3]) / 255.0, int(f[4]) / 255.0, int(f[5]) / 255.0]
        labels[i] = int(f[6])
    return PointCloud(pts, colors, labels)


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    flags = (1 if cloud.colors is not None else 0) | (2 if cloud.labels is not None else 0)
    head = CLOUD_MAGIC + struct.pack("<BBI", CLOUD_VERSION, flags, len(cloud))
    parts = [head, cloud.points.astype("<f4").tobytes()]
    if cloud.colors is not None:
        parts.append(_cloud_color_bytes(cloud).tobytes())
    if cloud.labels is not None:
        parts.append(cloud.labels.astype("<u4").tobytes())
    return b"".join(parts)


def cloud_from_bytes(data: bytes) -> PointCloud:
    if len(data) < 10 or data[:4] != CLOUD_MAGIC:
        raise UnknownFormatError("bad cloud magic", 0)
    version, flags, n = struct.unpack("<BBI", data[4:10])
    if version != CLOUD_VERSION:
        raise UnknownFormatError(f"unsupported cloud version {version}", 4)
    off = 10

    def take(nbytes, dtype, shape):
        nonlocal off
        if len(data) < off + nbytes:
            raise UnknownFormatError("truncated cloud payload", off)
        arr = np.frombuffer(data[off : off + nbytes], dtype=dtype).reshape(shape)
        off += nbytes
        return arr

    pts = take(12 * n, "<f4", (n, 3)).astype(np.float64)
    colors = take(3 * n, np.uint8, (n, 3)).astype(np.float64) / 255.0 if flags & 1 else None
    labels = take(4 * n, "<u4", (n,)).astype(np.uint32) if flags & 2 else None
    return PointCloud(pts, colors, labels)


def write_cloud(cloud: PointCloud, path) -> None:
    Path(path).write_bytes(cloud_to_bytes(cloud))


def read_cloud(path) -> PointCloud:
    return cloud_from_bytes(Path(path).read_bytes())


def _camera_to_json(cam: CameraModel) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "extrinsic": cam.extrinsic.as_matrix().tolist(),
    }


def _camera_from_json(d: dict) -> CameraModel:
    return CameraModel(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
        extrinsic=Pose.from_matrix(np.array(d["extrinsic"])),
    )


def observation_to_bytes(obs: SceneObservation, extra: dict | None = None) -> bytes:
    h, w = obs.depth.shape
    header = {
        "format": OBSERVATION_FORMAT,
        "version": OBSERVATION_VERSION,
        "height": h,
        "width": w,
        "camera": _camera_to_json(obs.camera),
        "planes": ["rgb_u8", "depth_f32", "segmentation_u32"],
    }
    if extra:
        header.update(extra)
    rgb = np.clip(np.round(obs.rgb * 255.0), 0, 255).astype(np.uint8)
    return (
        json.dumps(header, sort_keys=True).encode("utf-8")
        + b"\n"
        + rgb.tobytes()
        + obs.depth.astype("<f4").tobytes()
        + obs.segmentation.astype("<u4").tobytes()
    )


def observation_from_bytes(data: bytes) -> tuple[SceneObservation, dict]:
    """Decode a container; returns the observation and its JSON header."""
    nl = data.find(b"\n")
    if nl < 0:
        raise UnknownFormatError("missing container header line", 0)
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise UnknownFormatError("header is not valid JSON", 0) from None
    if header.get("format") != OBSERVATION_FORMAT:
        raise UnknownFormatError("not an observation container", 0)
    if header.get("version") != OBSERVATION_VERSION:
        raise UnknownFormatError(f"unsupported container version {header.get('version')}", 0)
    h, w = int(header["height"]), int(header["width"])
    off = nl + 1
    sizes = [3 * h * w, 4 * h * w, 4 * h * w]
    if len(data) < off + sum(sizes):
        raise UnknownFormatError("truncated container planes", len(data))
    rgb = np.frombuffer(data[off : off + sizes[0]], dtype=np.uint8).reshape(h, w, 3)
    off += sizes[0]
    depth = np.frombuffer(data[off : off + sizes[1]], dtype="<f4").reshape(h, w)
    off += sizes[1]
    seg = np.frombuffer(data[off : off + sizes[2]], dtype="<u4").reshape(h, w)
    cam = _camera_from_json(header["camera"])
    obs = SceneObservation(rgb.astype(np.float64) / 255.0, depth.astype(np.float64), seg.astype(np.uint32), cam)
    return obs, header


def write_observation(obs: SceneObservation, path, extra: dict | None = None) -> None:
    Path(path).write_bytes(observation_to_bytes(obs, extra))


def read_observation(path) -> SceneObservation:
    obs, _ = observation_from_bytes(Path(path).read_bytes())
    return obs
