"""Binary checkpoints with a config-hash guard (Repository Pattern).

Layout, little-endian:

    "FDCK" | u32 version | 32-byte SHA-256 of the config JSON | u64 optimizer step
    | u32 JSON length | JSON | u32 block count
    | blocks: u16 name length, name, u8 rank, rank x u32 extents, f32 data

Adam moments are stored as blocks named "adam.m.<param>" and "adam.v.<param>".
"""
import hashlib
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.domain.exceptions import CheckpointCorruptError, CheckpointError, CheckpointIncompatibleError
from app.domain.interfaces.checkpoint_repository import CheckpointPayload, ICheckpointRepository
from app.infrastructure.repositories.episode_repository import write_atomic


MAGIC = b"FDCK"
FORMAT_VERSION = 1
FIRST_MOMENT_PREFIX = "adam.m."
SECOND_MOMENT_PREFIX = "adam.v."

_F32 = np.dtype("<f4")


def config_digest(config_json: str) -> bytes:
    return hashlib.sha256(config_json.encode("utf-8")).digest()


class BinaryCheckpointRepository(ICheckpointRepository):
    """Reads and writes the checkpoint layout above."""

    def __init__(self):
        self._logger = logging.getLogger(__name__)

    def encode(self, payload: CheckpointPayload) -> bytes:
        blocks: List[Tuple[str, np.ndarray]] = list(payload.parameters.items())
        blocks += [(FIRST_MOMENT_PREFIX + name, value) for name, value in payload.first_moments.items()]
        blocks += [(SECOND_MOMENT_PREFIX + name, value) for name, value in payload.second_moments.items()]
        config_bytes = payload.config_json.encode("utf-8")
        chunks = [
            MAGIC,
            struct.pack("<I", FORMAT_VERSION),
            config_digest(payload.config_json),
            struct.pack("<Q", payload.step),
            struct.pack("<I", len(config_bytes)),
            config_bytes,
            struct.pack("<I", len(blocks)),
        ]
        for name, value in blocks:
            value = np.asarray(value)
            encoded_name = name.encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded_name)))
            chunks.append(encoded_name)
            chunks.append(struct.pack("<B", value.ndim))
            chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
            chunks.append(np.ascontiguousarray(value, dtype=_F32).tobytes())
        return b"".join(chunks)

    def decode(self, buffer: bytes, path: Path = Path("<memory>")) -> CheckpointPayload:
        """
        Parse a checkpoint buffer.

        Raises:
            CheckpointCorruptError: Truncated, malformed or self-inconsistent file
            CheckpointIncompatibleError: Unknown format version
        """
        offset = 0

        def take(count: int) -> bytes:
            nonlocal offset
            if offset + count > len(buffer):
                raise CheckpointCorruptError("truncated checkpoint", str(path))
            chunk = buffer[offset:offset + count]
            offset += count
            return chunk

        def unpack(fmt: str):
            layout = struct.Struct("<" + fmt)
            return layout.unpack(take(layout.size))

        if take(4) != MAGIC:
            raise CheckpointCorruptError("not a checkpoint file (bad magic)", str(path))
        (version,) = unpack("I")
        if version != FORMAT_VERSION:
            raise CheckpointIncompatibleError(f"checkpoint format version {version}, expected {FORMAT_VERSION}", str(path))
        digest = take(32)
        (step,) = unpack("Q")
        (config_length,) = unpack("I")
        try:
            config_json = take(config_length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointCorruptError("config is not valid UTF-8", str(path)) from e
        if config_digest(config_json) != digest:
            raise CheckpointCorruptError("stored config hash does not match the stored config", str(path))

        payload = CheckpointPayload(config_json=config_json, step=int(step))
        (count,) = unpack("I")
        for _ in range(count):
            (name_length,) = unpack("H")
            name = take(name_length).decode("utf-8", errors="replace")
            (rank,) = unpack("B")
            shape = unpack(f"{rank}I") if rank else ()
            size = int(np.prod(shape)) if shape else 1
            value = np.frombuffer(take(size * _F32.itemsize), dtype=_F32).reshape(shape).astype(np.float32)
            if name.startswith(FIRST_MOMENT_PREFIX):
                payload.first_moments[name[len(FIRST_MOMENT_PREFIX):]] = value
            elif name.startswith(SECOND_MOMENT_PREFIX):
                payload.second_moments[name[len(SECOND_MOMENT_PREFIX):]] = value
            else:
                payload.parameters[name] = value
        if offset != len(buffer):
            raise CheckpointCorruptError("trailing bytes after the last block", str(path))
        return payload

    def save(self, payload: CheckpointPayload, path: Path) -> None:
        write_atomic(Path(path), self.encode(payload))
        self._logger.info(f"Checkpoint at step {payload.step} saved to {path}")

    def load(self, path: Path, expected_config_json: Optional[str] = None) -> CheckpointPayload:
        path = Path(path)
        if not path.is_file():
            raise CheckpointError("checkpoint not found", str(path))
        payload = self.decode(path.read_bytes(), path)
        if expected_config_json is not None and config_digest(expected_config_json) != config_digest(payload.config_json):
            raise CheckpointIncompatibleError("checkpoint was written for a different config", str(path))
        self._logger.info(f"Checkpoint at step {payload.step} loaded from {path}")
        return payload


def moments_of(states: Dict[str, object]) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Split optimizer states into first/second moment dictionaries."""
    first = {name: state.first_moment for name, state in states.items()}
    second = {name: state.second_moment for name, state in states.items()}
    return first, second
