"""Binary episode files plus a JSON manifest (Repository Pattern).

Episode file layout, all little-endian:

    "FDWM" | u32 version | u32 H | u32 W | u32 T | u32 action_dim
    then T + 1 records, each:
        u8 flag (1 = action and flow present, 0 = final frame-only record)
        action      action_dim x f32 (zeros when flag = 0)
        rgb         H*W*3 x f32, row-major
        depth       H*W x f32
        object ids  H*W x u16
        u16 P, then P x (u16 id, 16 x f32 row-major pose matrix)
        flow        H*W*3 x f32 (zeros when flag = 0)
"""
import hashlib
import json
import logging
import os
import struct
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from app.domain.entities.geometry import Pose, RgbdFrame, SceneFlowField
from app.domain.entities.trajectory import SPLITS, Trajectory
from app.domain.entities.world import Action
from app.domain.exceptions import ChecksumMismatchError, DatasetCorruptError, DatasetError
from app.domain.interfaces.dataset_repository import IDatasetRepository


MAGIC = b"FDWM"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
EPISODE_SUFFIX = ".fdwm"

_HEADER = struct.Struct("<4sIIIII")
_F32 = np.dtype("<f4")
_U16 = np.dtype("<u2")


def file_checksum(path: Path) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_atomic(path: Path, payload: bytes) -> None:
    """Write to a sibling temp file, then rename over the destination."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
    os.replace(tmp, path)


def _orthonormalized(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation for a pose decoded from float32."""
    u, _, vt = np.linalg.svd(matrix[:3, :3])
    rotation = u @ vt
    if np.linalg.det(rotation) < 0:
        u[:, -1] = -u[:, -1]
        rotation = u @ vt
    result = np.eye(4)
    result[:3, :3] = rotation
    result[:3, 3] = matrix[:3, 3]
    return result


class _Reader:
    """Bounds-checked cursor over an episode buffer."""

    def __init__(self, buffer: bytes, path: Path):
        self._buffer = buffer
        self._offset = 0
        self._path = path

    def take(self, count: int) -> bytes:
        end = self._offset + count
        if end > len(self._buffer):
            raise DatasetCorruptError(f"truncated episode file (needed {end} bytes, have {len(self._buffer)})", str(self._path))
        chunk = self._buffer[self._offset:end]
        self._offset = end
        return chunk

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype, count=count)

    def scalar(self, fmt: str):
        layout = struct.Struct("<" + fmt)
        return layout.unpack(self.take(layout.size))[0]

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._buffer)


class EpisodeFileRepository(IDatasetRepository):
    """
    Stores each trajectory as one binary file; a manifest lists episodes,
    their splits, checksums and the dataset-wide normalization constants.
    """

    def __init__(self):
        self._logger = logging.getLogger(__name__)

    # Encoding

    def encode(self, trajectory: Trajectory) -> bytes:
        """Serialize a trajectory to the episode byte layout."""
        first = trajectory.frames[0]
        height, width = first.height, first.width
        action_dim = 2
        steps = trajectory.steps
        pixels = height * width
        chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, height, width, steps, action_dim)]
        for t, frame in enumerate(trajectory.frames):
            present = t < steps
            chunks.append(struct.pack("<B", 1 if present else 0))
            action = trajectory.actions[t].as_array() if present else np.zeros(action_dim)
            chunks.append(np.asarray(action, dtype=_F32).tobytes())
            chunks.append(np.asarray(frame.rgb, dtype=_F32).reshape(pixels * 3).tobytes())
            chunks.append(np.asarray(frame.depth, dtype=_F32).reshape(pixels).tobytes())
            ids = trajectory.object_ids[t] if trajectory.object_ids else np.zeros((height, width))
            chunks.append(np.asarray(ids, dtype=_U16).reshape(pixels).tobytes())
            poses = trajectory.poses[t]
            chunks.append(struct.pack("<H", len(poses)))
            for object_id in sorted(poses):
                chunks.append(struct.pack("<H", object_id))
                chunks.append(np.asarray(poses[object_id].matrix, dtype=_F32).reshape(16).tobytes())
            flow = trajectory.flows[t].flow if present else np.zeros((height, width, 3))
            chunks.append(np.asarray(flow, dtype=_F32).reshape(pixels * 3).tobytes())
        return b"".join(chunks)

    def decode(self, buffer: bytes, path: Path = Path("<memory>")) -> Trajectory:
        """
        Parse the episode byte layout.

        Raises:
            DatasetCorruptError: On bad magic, unknown version, truncation or trailing bytes
        """
        reader = _Reader(buffer, path)
        magic, version, height, width, steps, action_dim = _HEADER.unpack(reader.take(_HEADER.size))
        if magic != MAGIC:
            raise DatasetCorruptError(f"bad magic {magic!r}", str(path))
        if version != FORMAT_VERSION:
            raise DatasetCorruptError(f"unsupported episode format version {version}", str(path))
        if action_dim != 2:
            raise DatasetCorruptError(f"unsupported action_dim {action_dim}", str(path))
        pixels = height * width
        frames, actions, poses, flows, ids = [], [], [], [], []
        try:
            for t in range(steps + 1):
                flag = reader.scalar("B")
                if flag != (1 if t < steps else 0):
                    raise DatasetCorruptError(f"unexpected presence flag {flag} in record {t}", str(path))
                action = reader.array(_F32, action_dim).astype(np.float64)
                rgb = reader.array(_F32, pixels * 3).astype(np.float64).reshape(height, width, 3)
                depth = reader.array(_F32, pixels).astype(np.float64).reshape(height, width)
                ids.append(reader.array(_U16, pixels).astype(np.int64).reshape(height, width))
                pose_map = {}
                for _ in range(reader.scalar("H")):
                    object_id = reader.scalar("H")
                    matrix = reader.array(_F32, 16).astype(np.float64).reshape(4, 4)
                    pose_map[int(object_id)] = Pose(_orthonormalized(matrix))
                flow = reader.array(_F32, pixels * 3).astype(np.float64).reshape(height, width, 3)
                frames.append(RgbdFrame(rgb, depth))
                poses.append(pose_map)
                if flag:
                    actions.append(Action.from_array(action))
                    flows.append(SceneFlowField(flow))
        except ValueError as e:
            raise DatasetCorruptError(f"invalid episode contents: {e}", str(path)) from e
        if not reader.exhausted:
            raise DatasetCorruptError("trailing bytes after the final record", str(path))
        return Trajectory(frames=frames, actions=actions, poses=poses, flows=flows, object_ids=ids)

    # IDatasetRepository

    def write_episode(self, trajectory: Trajectory, path: Path) -> str:
        write_atomic(path, self.encode(trajectory))
        checksum = file_checksum(path)
        self._logger.debug(f"Wrote episode {trajectory.episode_id} ({trajectory.steps} steps) to {path}")
        return checksum

    def read_episode(self, path: Path, expected_checksum: Optional[str] = None) -> Trajectory:
        path = Path(path)
        if not path.is_file():
            raise DatasetError("episode file not found", str(path))
        if expected_checksum is not None and file_checksum(path) != expected_checksum:
            raise ChecksumMismatchError("episode checksum does not match the manifest", str(path))
        return self.decode(path.read_bytes(), path)

    def write_manifest(self, dataset_dir: Path, manifest: Dict[str, Any]) -> Path:
        path = Path(dataset_dir) / MANIFEST_NAME
        write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))
        self._logger.info(f"Manifest with {len(manifest.get('episodes', []))} episodes written to {path}")
        return path

    def read_manifest(self, dataset_dir: Path) -> Dict[str, Any]:
        path = Path(dataset_dir) / MANIFEST_NAME
        if not path.is_file():
            raise DatasetError("dataset manifest not found", str(path))
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DatasetCorruptError(f"manifest is not valid JSON: {e}", str(path)) from e
        if manifest.get("format_version") != FORMAT_VERSION:
            raise DatasetCorruptError(f"unsupported dataset format {manifest.get('format_version')}", str(path))
        for key in ("height", "width", "action_dim", "depth_min", "depth_max", "episodes"):
            if key not in manifest:
                raise DatasetCorruptError(f"manifest misses {key!r}", str(path))
        return manifest

    def episodes_in_split(self, dataset_dir: Path, split: str) -> List[Dict[str, Any]]:
        if split not in SPLITS:
            raise ValueError(f"Invalid split: {split}")
        return [entry for entry in self.read_manifest(dataset_dir)["episodes"] if entry["split"] == split]

    def load_split(self, dataset_dir: Path, split: str) -> List[Trajectory]:
        """
        Decode every episode of one split, verifying checksums.

        Raises:
            DatasetError: If the split is empty
        """
        entries = self.episodes_in_split(dataset_dir, split)
        if not entries:
            raise DatasetError(f"no episodes in split {split!r}", str(Path(dataset_dir) / MANIFEST_NAME))
        trajectories = []
        for entry in entries:
            trajectory = self.read_episode(Path(dataset_dir) / entry["file"], entry["checksum"])
            trajectories.append(replace(trajectory, split=entry["split"], episode_id=int(entry["id"])))
        return trajectories
