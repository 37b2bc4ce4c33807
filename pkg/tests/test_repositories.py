import json
import shutil
import struct

import numpy as np
import pytest

from app.application.services.dataset_service import DatasetGenerationService, assign_splits
from app.domain.exceptions import (
    CheckpointCorruptError,
    CheckpointError,
    CheckpointIncompatibleError,
    ChecksumMismatchError,
    DatasetCorruptError,
    DatasetError,
)
from app.domain.interfaces.checkpoint_repository import CheckpointPayload
from app.infrastructure.geometry import flow_from_poses, unproject
from app.infrastructure.repositories import (
    BinaryCheckpointRepository,
    EpisodeFileRepository,
    FramePairDataset,
    load_batches,
)
from app.infrastructure.repositories.episode_repository import MANIFEST_NAME
from app.infrastructure.simulator import get_world

from tests.conftest import tiny_env_config


def _episode_files(directory):
    return sorted(directory.glob("episode_*.fdwm"))


def _payload(config_json='{"mode":"flowdreamer"}', step=7):
    rng = np.random.default_rng(0)
    weights = {"layer.weight": rng.standard_normal((2, 3)).astype(np.float32), "layer.bias": np.zeros(3, np.float32)}
    return CheckpointPayload(
        config_json=config_json,
        step=step,
        parameters=weights,
        first_moments={name: value * 0.1 for name, value in weights.items()},
        second_moments={name: value * value for name, value in weights.items()},
    )


# dataset generation

def test_generate_writes_episodes_and_manifest(tmp_path):
    summary = DatasetGenerationService(num_workers=1).generate(tiny_env_config(), 2, 3, tmp_path, seed=5)
    assert summary.samples == 6
    assert summary.split_counts == {"train": 1, "val": 0, "test": 1}
    assert len(_episode_files(tmp_path)) == 2

    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert manifest["height"] == 16 and manifest["action_dim"] == 2
    assert manifest["depth_min"] <= manifest["depth_max"]
    assert sorted(entry["split"] for entry in manifest["episodes"]) == ["test", "train"]


def test_generation_is_reproducible_across_worker_counts(tmp_path):
    config = tiny_env_config()
    DatasetGenerationService(num_workers=1).generate(config, 3, 2, tmp_path / "a", seed=1)
    DatasetGenerationService(num_workers=3).generate(config, 3, 2, tmp_path / "b", seed=1)
    for left, right in zip(_episode_files(tmp_path / "a"), _episode_files(tmp_path / "b")):
        assert left.read_bytes() == right.read_bytes()
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()


def test_split_assignment():
    assert assign_splits(3, 0).count("test") == 1
    assert assign_splits(1, 0) == ["train"]
    splits = assign_splits(100, 0)
    assert (splits.count("train"), splits.count("val"), splits.count("test")) == (90, 5, 5)


def test_generate_rejects_empty_request(tmp_path):
    with pytest.raises(ValueError):
        DatasetGenerationService(num_workers=1).generate(tiny_env_config(), 0, 3, tmp_path, seed=0)


# episode files

def test_stored_episode_decodes(dataset_dir):
    repository = EpisodeFileRepository()
    trajectories = repository.load_split(dataset_dir, "train")
    assert len(trajectories) == 2
    first = trajectories[0]
    assert first.steps == 3
    assert len(first.frames) == 4 and len(first.flows) == 3
    assert first.frames[0].rgb.shape == (16, 16, 3)
    assert 1 in first.poses[0]


def test_stored_flow_matches_simulator_flow(dataset_dir):
    config = tiny_env_config()
    service = DatasetGenerationService(num_workers=1)
    for stored in EpisodeFileRepository().load_split(dataset_dir, "train"):
        regenerated = service.collect_episode(get_world(config), stored.steps, 0, stored.episode_id, stored.split)
        for t in range(stored.steps):
            assert np.array_equal(stored.flows[t].flow, regenerated.flows[t].flow.astype(np.float32))
            points = unproject(stored.frames[t].depth, config.intrinsics, stored.frames[t].validity)
            rebuilt = flow_from_poses(points, stored.object_ids[t], stored.poses[t], stored.poses[t + 1])
            np.testing.assert_allclose(rebuilt.flow, stored.flows[t].flow, atol=1e-5)


def test_checksum_mismatch_detected(dataset_dir):
    path = _episode_files(dataset_dir)[0]
    with pytest.raises(ChecksumMismatchError):
        EpisodeFileRepository().read_episode(path, "0" * 64)


def test_truncated_episode_rejected(dataset_dir, tmp_path):
    buffer = _episode_files(dataset_dir)[0].read_bytes()
    repository = EpisodeFileRepository()
    with pytest.raises(DatasetCorruptError):
        repository.decode(buffer[:-5])
    with pytest.raises(DatasetCorruptError):
        repository.decode(buffer + b"\x00")
    with pytest.raises(DatasetCorruptError):
        repository.decode(b"XXXX" + buffer[4:])


def test_missing_manifest_is_a_dataset_error(tmp_path):
    with pytest.raises(DatasetError):
        EpisodeFileRepository().read_manifest(tmp_path)


def test_corrupted_copy_fails_split_load(dataset_dir, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(dataset_dir, copy)
    victim = _episode_files(copy)[0]
    data = bytearray(victim.read_bytes())
    data[100] ^= 0xFF
    victim.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError):
        for split in ("train", "test"):
            EpisodeFileRepository().load_split(copy, split)


# checkpoints

def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    repository = BinaryCheckpointRepository()
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    repository.save(_payload(), first)
    loaded = repository.load(first, '{"mode":"flowdreamer"}')
    assert loaded.step == 7
    np.testing.assert_array_equal(loaded.parameters["layer.weight"], _payload().parameters["layer.weight"])
    repository.save(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_truncated_checkpoint_rejected():
    buffer = BinaryCheckpointRepository().encode(_payload())
    with pytest.raises(CheckpointCorruptError):
        BinaryCheckpointRepository().decode(buffer[:-3])


def test_unknown_checkpoint_version_rejected():
    buffer = bytearray(BinaryCheckpointRepository().encode(_payload()))
    buffer[4:8] = struct.pack("<I", 99)
    with pytest.raises(CheckpointIncompatibleError):
        BinaryCheckpointRepository().decode(bytes(buffer))


def test_checkpoint_for_other_config_rejected(tmp_path):
    repository = BinaryCheckpointRepository()
    repository.save(_payload(), tmp_path / "model.ckpt")
    with pytest.raises(CheckpointIncompatibleError):
        repository.load(tmp_path / "model.ckpt", '{"mode":"vanilla"}')


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        BinaryCheckpointRepository().load(tmp_path / "absent.ckpt")


# frame pairs

def test_oversized_batch_returns_whole_split(dataset_dir):
    dataset = FramePairDataset.from_directory(dataset_dir, "train")
    assert len(dataset) == 6
    assert dataset.batches_per_epoch(100) == 1
    batch = dataset.batch_at(0, 100, seed=0)
    assert len(batch.sample_ids) == 6
    assert sorted(batch.sample_ids) == sorted(dataset.batch_at(1, 100, seed=0).sample_ids)


def test_batch_order_depends_only_on_seed_and_step(dataset_dir):
    dataset = FramePairDataset.from_directory(dataset_dir, "train")
    assert dataset.batch_at(3, 4, seed=2).sample_ids == dataset.batch_at(3, 4, seed=2).sample_ids
    stream = load_batches(dataset_dir, "train", 4, seed=2)
    assert next(stream).sample_ids == dataset.batch_at(0, 4, seed=2).sample_ids
    assert next(stream).sample_ids == dataset.batch_at(1, 4, seed=2).sample_ids


def test_epoch_covers_every_sample_once(dataset_dir):
    dataset = FramePairDataset.from_directory(dataset_dir, "train")
    seen = [sample for step in range(dataset.batches_per_epoch(4)) for sample in dataset.batch_at(step, 4, 9).sample_ids]
    assert sorted(seen) == sorted(dataset.take(np.arange(len(dataset))).sample_ids)


def test_wrong_split_refused(dataset_dir):
    test_episodes = EpisodeFileRepository().load_split(dataset_dir, "test")
    with pytest.raises(DatasetError):
        FramePairDataset(test_episodes, "train")
