"""Strict TOML config loading: defaults, rejection, path resolution."""

from pathlib import Path

import pytest

from refground.config import (
    ConfigError,
    PipelineConfig,
    parse_config,
    validate_config,
)
from refground.core import STAGE_ORDER


def write_config(tmp_path: Path, body: str) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(body, encoding="utf-8")
    return path


MINIMAL = 'manifest = "corpus/manifest.jsonl"\nout_dir = "out"\n'


def test_minimal_config_defaults(tmp_path):
    config = validate_config(write_config(tmp_path, MINIMAL))
    assert config.manifest == (tmp_path / "corpus" / "manifest.jsonl").resolve()
    assert config.out_dir == (tmp_path / "out").resolve()
    assert config.backend == "mock"
    assert config.backend_config is None
    assert config.seed == 7
    assert config.connectivity == 8
    assert config.queries_per_image == 2
    assert config.tau == 0.5
    assert config.matching_policy == "optimal"
    assert config.concurrency == 1
    assert config.stages == STAGE_ORDER


def test_paths_resolve_against_config_directory(tmp_path):
    nested = tmp_path / "configs"
    nested.mkdir()
    path = nested / "run.toml"
    path.write_text(
        'manifest = "../corpus/manifest.jsonl"\nout_dir = "runs/a"\n',
        encoding="utf-8",
    )
    config = validate_config(path)
    assert config.manifest == (tmp_path / "corpus" / "manifest.jsonl").resolve()
    assert config.out_dir == (nested / "runs" / "a").resolve()


def test_unknown_key_is_named(tmp_path):
    body = MINIMAL + 'temprature = 0.7\n'
    with pytest.raises(ConfigError, match="temprature"):
        validate_config(write_config(tmp_path, body))


def test_missing_required_key(tmp_path):
    with pytest.raises(ConfigError, match="manifest"):
        validate_config(write_config(tmp_path, 'out_dir = "out"\n'))


def test_invalid_toml_reports_config_error(tmp_path):
    with pytest.raises(ConfigError, match="not valid TOML"):
        validate_config(write_config(tmp_path, "manifest = [unterminated\n"))


def test_missing_file_reports_config_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        validate_config(tmp_path / "absent.toml")


def test_tau_out_of_range_message(tmp_path):
    body = MINIMAL + "tau = 1.5\n"
    with pytest.raises(ConfigError, match="tau out of range"):
        validate_config(write_config(tmp_path, body))


def test_tau_boundaries_rejected(tmp_path):
    for value in ("0.0", "1.0"):
        body = MINIMAL + f"tau = {value}\n"
        with pytest.raises(ConfigError, match="tau out of range"):
            validate_config(write_config(tmp_path, body))


def test_connectivity_must_be_4_or_8(tmp_path):
    body = MINIMAL + "connectivity = 6\n"
    with pytest.raises(ConfigError, match="connectivity"):
        validate_config(write_config(tmp_path, body))


def test_rates_must_sum_to_at_most_one(tmp_path):
    body = MINIMAL + "corruption_rate = 0.6\nmismatch_rate = 0.6\n"
    with pytest.raises(ConfigError, match="sum"):
        validate_config(write_config(tmp_path, body))


def test_negative_rate_rejected(tmp_path):
    body = MINIMAL + "corruption_rate = -0.1\n"
    with pytest.raises(ConfigError, match="corruption_rate"):
        validate_config(write_config(tmp_path, body))


def test_stages_must_be_prefix(tmp_path):
    body = MINIMAL + 'stages = ["rules"]\n'
    with pytest.raises(ConfigError, match="prefix"):
        validate_config(write_config(tmp_path, body))


def test_stage_prefix_accepted(tmp_path):
    body = MINIMAL + 'stages = ["format", "rules"]\n'
    config = validate_config(write_config(tmp_path, body))
    assert config.stages == ("format", "rules")


def test_live_backend_requires_table(tmp_path):
    body = MINIMAL + 'backend = "live"\n'
    with pytest.raises(ConfigError, match="backend_config"):
        validate_config(write_config(tmp_path, body))


def test_backend_config_unknown_key_rejected(tmp_path):
    body = MINIMAL + (
        'backend = "live"\n'
        "[backend_config]\n"
        'endpoint = "http://localhost:9000/v1/chat/completions"\n'
        'model = "demo"\n'
        "tempersture = 0.3\n"
    )
    with pytest.raises(ConfigError, match="tempersture"):
        validate_config(write_config(tmp_path, body))


def test_backend_config_parsed(tmp_path):
    body = MINIMAL + (
        'backend = "live"\n'
        "[backend_config]\n"
        'endpoint = "http://localhost:9000/v1/chat/completions"\n'
        'model = "demo"\n'
        "temperature = 0.3\n"
        'transcript_path = "logs/calls.jsonl"\n'
    )
    config = validate_config(write_config(tmp_path, body))
    assert config.backend == "live"
    assert config.backend_config is not None
    assert config.backend_config.model == "demo"
    assert config.backend_config.temperature == 0.3
    assert config.backend_config.transcript_path == (
        tmp_path / "logs" / "calls.jsonl"
    ).resolve()


def test_int_key_rejects_bool(tmp_path):
    body = MINIMAL + "seed = true\n"
    with pytest.raises(ConfigError, match="seed"):
        validate_config(write_config(tmp_path, body))


def test_int_key_rejects_float(tmp_path):
    body = MINIMAL + "concurrency = 1.5\n"
    with pytest.raises(ConfigError, match="concurrency"):
        validate_config(write_config(tmp_path, body))


def test_float_key_accepts_int(tmp_path):
    body = MINIMAL + "tau = 0\n"
    with pytest.raises(ConfigError, match="tau out of range"):
        validate_config(write_config(tmp_path, body))
    body = MINIMAL + "corruption_rate = 1\n"
    config = validate_config(write_config(tmp_path, body))
    assert config.corruption_rate == 1.0


def test_matching_policy_validated(tmp_path):
    body = MINIMAL + 'matching_policy = "perfect"\n'
    with pytest.raises(ConfigError, match="matching_policy"):
        validate_config(write_config(tmp_path, body))


def test_parse_config_direct_mapping():
    config = parse_config(
        {"manifest": "m.jsonl", "out_dir": "o", "seed": 11},
        base_dir=Path("/tmp/base"),
    )
    assert isinstance(config, PipelineConfig)
    assert config.seed == 11
    assert config.manifest == Path("/tmp/base/m.jsonl").resolve()
