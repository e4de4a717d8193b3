"""Config parsing/serialization and the experiment runner CLI."""

import json
from pathlib import Path

import pytest

from fedseal import (
    ConfigError,
    config_hash,
    parse_config,
    parse_config_text,
    serialize_config,
)
from fedseal.cli import emit_metrics, run
from fedseal.experiment import RoundRecord

REPO_ROOT = Path(__file__).resolve().parents[1]
BUNDLED_SYNTHETIC = REPO_ROOT / "configs" / "synthetic_small.ini"

FAST_CONFIG = """\
[experiment]
algorithm = fedseal
n_clients = 3
clients_per_round = 3
rounds = 2
seed = 4
hidden_dims = 10,6

[data]
kind = synthetic
n_classes = 3
n_features = 8
spread = 0.2
per_client = 18
server_train_n = 18
server_val_n = 12
test_n = 30

[server]
epochs = 1
batch_size = 9
learning_rate = 0.05
bootstrap_epochs = 5

[client]
epochs = 1
batch_size = 9
learning_rate = 0.05
"""


# ---------------------------------------------------------------------------
# parse_config
# ---------------------------------------------------------------------------


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config_text("[experiment]\nalgorithm = fedseal\n[data]\nkind = synthetic\n")
    assert cfg.client.theta == 0.05
    assert cfg.server.learning_rate == 0.001
    assert cfg.client.learning_rate == 0.001
    assert cfg.server.lr_decay == 0.995
    assert cfg.client.lr_decay == 0.995
    assert cfg.server.momentum == 0.9
    assert cfg.client.momentum == 0.9
    assert cfg.fixmatch_threshold == 0.9
    assert cfg.n_clients == 10
    assert cfg.hidden_dims == (128, 64)


def test_clients_per_round_above_population_is_config_error():
    text = "[experiment]\nalgorithm = fedseal\nn_clients = 4\nclients_per_round = 5\n"
    with pytest.raises(ConfigError, match="clients_per_round"):
        parse_config_text(text)


def test_round_trip_serialize_then_parse(tmp_path):
    cfg = parse_config_text(FAST_CONFIG)
    text = serialize_config(cfg)
    assert parse_config_text(text) == cfg
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    assert parse_config(path) == cfg
    assert config_hash(parse_config(path)) == config_hash(cfg)


def test_unknown_key_names_key_and_line():
    text = "[experiment]\nalgorithm = fedseal\nwidgets = 3\n"
    with pytest.raises(ConfigError, match=r"line 3.*widgets"):
        parse_config_text(text)


def test_type_mismatch_names_key_and_line():
    text = "[experiment]\nalgorithm = fedseal\nrounds = soon\n"
    with pytest.raises(ConfigError, match=r"line 3.*rounds"):
        parse_config_text(text)


def test_constraint_violation_names_line():
    text = "[experiment]\nalgorithm = fedseal\nrounds = 0\n"
    with pytest.raises(ConfigError, match="line 3"):
        parse_config_text(text)


def test_missing_algorithm_is_error():
    with pytest.raises(ConfigError, match="algorithm"):
        parse_config_text("[experiment]\nrounds = 5\n")


def test_unknown_section_and_stray_key():
    with pytest.raises(ConfigError, match=r"line 1.*unknown section"):
        parse_config_text("[general]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"line 1.*outside"):
        parse_config_text("x = 1\n")


def test_duplicate_key_is_error():
    text = "[experiment]\nalgorithm = fedseal\nrounds = 5\nrounds = 6\n"
    with pytest.raises(ConfigError, match=r"line 4.*duplicate"):
        parse_config_text(text)


def test_bad_boolean_value():
    text = (
        "[experiment]\nalgorithm = fedseal\n[client]\nuse_ensemble = maybe\n"
    )
    with pytest.raises(ConfigError, match=r"line 4.*use_ensemble"):
        parse_config_text(text)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.ini")


# ---------------------------------------------------------------------------
# emit_metrics
# ---------------------------------------------------------------------------


def _record(round_index=1, pos_rate=0.75, neg_rate=None):
    return RoundRecord(
        round=round_index,
        test_accuracy=0.8,
        taus=(0.5, 0.25, 1.0),
        pos_sizes=(3, 4),
        neg_sizes=(0, 0),
        pos_correct_rate=pos_rate,
        neg_correct_rate=neg_rate,
        lambda_weight=0.1,
        wall_ms=12.5,
    )


def test_emit_single_record_two_line_csv(tmp_path):
    paths = emit_metrics([_record()], tmp_path)
    lines = paths["rounds_csv"].read_text().splitlines()
    assert len(lines) == 2


def test_emit_header_schema_and_column_count(tmp_path):
    emit_metrics([_record()], tmp_path)
    lines = (tmp_path / "rounds.csv").read_text().splitlines()
    header = lines[0].split(",")
    n_classes = 3
    assert header == [
        "round", "test_acc", "lambda", "tau_0", "tau_1", "tau_2",
        "pos_size_mean", "neg_size_mean", "pos_correct_rate", "neg_correct_rate",
        "wall_ms",
    ]
    assert len(header) == 8 + n_classes
    for line in lines[1:]:
        assert len(line.split(",")) == len(header)


def test_emit_absent_rate_is_empty_cell_not_zero(tmp_path):
    emit_metrics([_record(neg_rate=None)], tmp_path)
    row = (tmp_path / "rounds.csv").read_text().splitlines()[1].split(",")
    assert row[-2] == ""  # neg_correct_rate
    assert row[-3] != ""  # pos_correct_rate present


def test_emit_requires_records(tmp_path):
    with pytest.raises(ValueError, match="no round records"):
        emit_metrics([], tmp_path)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_single_round_on_bundled_synthetic_config(tmp_path):
    out = tmp_path / "out"
    code = run(["--config", str(BUNDLED_SYNTHETIC), "--rounds", "1",
                "--output-dir", str(out)])
    assert code == 0
    lines = (out / "rounds.csv").read_text().splitlines()
    assert len(lines) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {
        "final_accuracy", "best_accuracy", "best_round", "config_hash", "seed"
    }
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"]
    assert manifest["ended_at"] is None


def test_run_missing_config_flag_returns_one(capsys):
    assert run([]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "--config" in err


def test_run_config_error_returns_one(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nalgorithm = warp\n")
    assert run(["--config", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err


def test_run_runtime_error_returns_two(tmp_path, capsys):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(
        "[experiment]\nalgorithm = fedseal\n"
        "[data]\nkind = csv\ntrain_csv = /nonexistent/pool.csv\n"
    )
    assert run(["--config", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_run_same_flags_byte_identical_csv(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(FAST_CONFIG)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["--config", str(cfg_path), "--output-dir", str(out_a)]) == 0
    assert run(["--config", str(cfg_path), "--output-dir", str(out_b)]) == 0
    assert (out_a / "rounds.csv").read_bytes() == (out_b / "rounds.csv").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()


def test_run_overrides_change_the_run(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(FAST_CONFIG)
    out = tmp_path / "o"
    assert run(["--config", str(cfg_path), "--output-dir", str(out),
                "--algorithm", "server_sl", "--seed", "9", "--rounds", "3"]) == 0
    lines = (out / "rounds.csv").read_text().splitlines()
    assert len(lines) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 9


def test_manifest_config_snapshot_reproduces_the_run(tmp_path):
    # A run directory is self-describing: re-running from the manifest's
    # config snapshot reproduces rounds.csv byte for byte.
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(FAST_CONFIG)
    out_a = tmp_path / "a"
    assert run(["--config", str(cfg_path), "--output-dir", str(out_a)]) == 0
    manifest = json.loads((out_a / "manifest.json").read_text())

    replay_cfg = tmp_path / "replay.ini"
    replay_cfg.write_text(manifest["config_text"])
    out_b = tmp_path / "b"
    assert run(["--config", str(replay_cfg), "--output-dir", str(out_b)]) == 0
    assert (out_a / "rounds.csv").read_bytes() == (out_b / "rounds.csv").read_bytes()
