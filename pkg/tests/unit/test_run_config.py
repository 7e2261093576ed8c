import pytest

from src.domain.errors import ConfigError
from src.infrastructure.config.run_config import (
    build_config,
    config_hash,
    config_keys,
    flatten,
    load_config,
    parse_overrides,
    parse_value,
)


def test_defaults_are_valid():
    config = build_config({})
    assert config.train.attn.gamma == 0.3
    assert config.train.loss.lambda_sep == 0.1
    assert config.synth.small_part_ratio == 0.05


def test_parse_value_reads_toml_literals():
    assert parse_value("1e-4") == 1e-4
    assert parse_value("true") is True
    assert parse_value("[0.1, 0.2]") == [0.1, 0.2]
    assert parse_value("transposed") == "transposed"


def test_overrides_apply_on_top_of_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[train]\nbase_lr = 0.01\n\n[train.attn]\ngamma = 0.4\n", encoding="utf-8")
    config = load_config(path, ["train.attn.gamma=0.2", "model.upsample=transposed"])
    assert config.train.base_lr == 0.01
    assert config.train.attn.gamma == 0.2
    assert config.model.upsample == "transposed"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as exc:
        build_config({"train.attn.gama": 0.3})
    assert exc.value.key == "train.attn.gama"


def test_validation_error_reports_dotted_key():
    with pytest.raises(ConfigError) as exc:
        build_config({"train.attn.gaussian_kernel": 4})
    assert exc.value.key == "train.attn.gaussian_kernel"
    with pytest.raises(ConfigError):
        build_config({"synth.small_part_ratio": 0.5})
    with pytest.raises(ConfigError):
        build_config({"model.image_size": 30, "model.token_grid": 8})


def test_malformed_override_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_overrides(["train.base_lr"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_hash_tracks_effective_values():
    a = build_config({})
    b = build_config({"train.attn.gamma": 0.3})
    c = build_config({"train.attn.gamma": 0.2})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 64


def test_every_leaf_is_listed():
    keys = dict(config_keys())
    assert set(keys) == set(flatten(build_config({}).model_dump(mode="json")))
    assert keys["train.attn.gamma"] == "0.3"
