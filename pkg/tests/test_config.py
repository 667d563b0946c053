import json

import pytest

from utils.config import Config
from utils.errors import ConfigError


def test_set_coerces_to_the_default_type():
    config = Config()
    config.set("max_concurrency", "8")
    config.set("request_timeout", "2.5")
    config.set("exclude_anomalies", "yes")
    config.set("mask_method_name", "off")
    assert config.MAX_CONCURRENCY == 8
    assert config.REQUEST_TIMEOUT == 2.5
    assert config.EXCLUDE_ANOMALIES is True
    assert config.MASK_METHOD_NAME is False
    # Overrides live on the instance, not the class
    assert "MAX_CONCURRENCY" in vars(config)
    assert "MAX_CONCURRENCY" not in vars(Config())


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        Config().set("no_such_setting", 1)
    with pytest.raises(ConfigError):
        Config().set("_private", 1)


def test_from_toml_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'provider = "ollama"\n'
        'model_id = "llama3"\n'
        "transitive_control = true\n"
        "seed = 7\n"
        "[[models]]\n"
        'name = "small"\n'
        'provider = "mock"\n'
        'model_id = "mock-small"\n',
        encoding="utf-8",
    )
    config = Config.from_file(str(path))
    assert (config.PROVIDER, config.MODEL_ID, config.SEED) == ("ollama", "llama3", 7)
    assert config.TRANSITIVE_CONTROL is True
    assert config.MODELS == [{"name": "small", "provider": "mock", "model_id": "mock-small"}]


def test_from_json_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"language": "java", "test_timeout": 2}), encoding="utf-8")
    config = Config.from_file(str(path))
    assert config.LANGUAGE == "java"
    assert config.TEST_TIMEOUT == 2.0


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        Config.from_file(str(tmp_path / "missing.toml"))
    broken = tmp_path / "broken.toml"
    broken.write_text("provider = \n", encoding="utf-8")
    with pytest.raises(ConfigError):
        Config.from_file(str(broken))


def test_snapshot_is_sorted_and_free_of_credentials(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-secret")
    config = Config()
    snapshot = config.snapshot()
    assert list(snapshot) == sorted(snapshot)
    assert snapshot["API_KEY_ENV"] == "OPENAI_API_KEY"
    assert "sk-secret" not in json.dumps(snapshot, default=str)
