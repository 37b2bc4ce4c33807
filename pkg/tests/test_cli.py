import json
import logging

import pytest

from app.api.cli import cli_dispatch, parse_args, train_config_from_args
from app.config.settings import Config
from app.domain.exceptions import (
    CheckpointCorruptError,
    CliUsageError,
    DatasetError,
    TrainingDivergedError,
)
from app.middleware.error_handler import EXIT_DATA, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, exit_code_for


def _usage_messages(caplog):
    return [record.getMessage() for record in caplog.records if record.getMessage().startswith("Usage error")]


# parsing

def test_unknown_flag_is_echoed():
    with pytest.raises(CliUsageError) as info:
        parse_args(["selftest", "--bogus"])
    assert info.value.token == "--bogus"
    assert "--bogus" in str(info.value)


def test_missing_command_is_a_usage_error():
    with pytest.raises(CliUsageError):
        parse_args([])


def test_plan_defaults():
    args = parse_args(["plan", "--policy", "oracle"])
    assert args.horizon == 5 and args.population == 64 and args.elites == 8
    assert args.cost == "final"


def test_train_dtype_falls_back_to_environment(monkeypatch):
    monkeypatch.setattr(Config, "DEFAULT_DTYPE", "float64")
    assert train_config_from_args(parse_args(["train"])).model.dtype == "float64"
    assert train_config_from_args(parse_args(["train", "--dtype", "float32"])).model.dtype == "float32"


def test_train_alpha_is_only_set_when_given():
    config = train_config_from_args(parse_args(["train"]))
    assert "alpha" not in config.model_fields_set
    assert config.alpha == 1.0
    config = train_config_from_args(parse_args(["train", "--alpha", "0.5"]))
    assert "alpha" in config.model_fields_set
    assert config.alpha == 0.5


# exit codes

def test_exit_code_mapping():
    assert exit_code_for(CliUsageError("x")) == EXIT_USAGE
    assert exit_code_for(DatasetError("x")) == EXIT_DATA
    assert exit_code_for(CheckpointCorruptError("x")) == EXIT_DATA
    assert exit_code_for(FileNotFoundError("x")) == EXIT_DATA
    assert exit_code_for(TrainingDivergedError("x")) == EXIT_FAILURE
    assert exit_code_for(RuntimeError("x")) == EXIT_FAILURE


def test_unknown_flag_exits_one(caplog):
    with caplog.at_level(logging.ERROR):
        assert cli_dispatch(["gen-data", "--nope"]) == EXIT_USAGE
    assert any("--nope" in message for message in _usage_messages(caplog))


def test_help_exits_zero(capsys):
    assert cli_dispatch(["--help"]) == EXIT_OK
    assert "gen-data" in capsys.readouterr().out


def test_invalid_value_exits_one(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        code = cli_dispatch(["train", "--steps", "0", "--dataset", str(tmp_path), "--out", str(tmp_path / "run")])
    assert code == EXIT_USAGE
    assert any("steps" in message for message in _usage_messages(caplog))


def test_plan_with_model_policy_needs_checkpoint(tmp_path):
    assert cli_dispatch(["plan", "--policy", "model", "--out", str(tmp_path)]) == EXIT_USAGE


def test_correlate_needs_an_input(tmp_path):
    assert cli_dispatch(["correlate", "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_checkpoint_exits_two(tmp_path):
    code = cli_dispatch(["eval", "--checkpoint", str(tmp_path / "absent.ckpt"), "--out", str(tmp_path / "eval")])
    assert code == EXIT_DATA


def test_missing_dataset_exits_two(tmp_path):
    code = cli_dispatch(["train", "--steps", "1", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path / "run")])
    assert code == EXIT_DATA


# commands

def test_gen_data_writes_dataset_and_header(tmp_path):
    out = tmp_path / "data"
    assert cli_dispatch(["gen-data", "--episodes", "2", "--steps", "2", "--seed", "4", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["episodes"]) == 2
    header = json.loads((out / "run_header.json").read_text())
    assert header["command"] == "gen-data"
    assert header["seed"] == 4


def test_selftest_passes(tmp_path):
    assert cli_dispatch(["selftest", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "run_header.json").is_file()
