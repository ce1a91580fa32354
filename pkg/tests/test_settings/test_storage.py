import json
from pathlib import Path

import pytest

from gaussnet.settings import ConfigError, Env, Json, Storage, Toml, from_file

HERE = Path(__file__).parent


def test_env_uses_package_prefix(monkeypatch):
    monkeypatch.setenv("GAUSSNET_DATA_DIR", "/data")
    storage = Env()
    assert storage[("data", "dir")] == "/data"


def test_env_second_level_variable(monkeypatch):
    monkeypatch.setenv("GAUSSNET_TRAIN_EPOCHS", "7")
    storage = Env()
    assert storage[("train", "epochs")] == "7"


def test_env_no_prefix_gets_all(monkeypatch):
    monkeypatch.setenv("SOME", "VALUE")
    storage = Env(prefix="")
    assert storage[("some",)] == "VALUE"


def test_env_missing_key(monkeypatch):
    monkeypatch.delenv("GAUSSNET_MISSING", raising=False)
    storage = Env()
    assert ("missing",) not in storage
    with pytest.raises(KeyError):
        storage[("missing",)]


def test_storage_skips_none_values():
    storage = Storage({"train": {"epochs": None}}, {"train": {"epochs": 3}})
    assert storage[("train", "epochs")] == 3


def test_storage_nested_lookup():
    storage = Storage({"train": {"epochs": 3}})
    assert ("train", "epochs") in storage
    assert ("train", "seed") not in storage


@pytest.fixture
def json_configs(tmp_path):
    data = {"str": "value", "int": 1, "float": 1 / 3, "bool": True}
    file = tmp_path / "settings.json"
    with open(file, "w") as fh:
        json.dump(data, fh)
    return file, data


def test_json_storage(json_configs):
    file, data = json_configs
    storage = Json(file)
    for key, value in data.items():
        assert storage[(key,)] == value


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        Json(tmp_path / "absent.json")


def test_missing_file_ok(tmp_path):
    storage = Json(tmp_path / "absent.json", missing_ok=True)
    assert ("any",) not in storage


def test_toml_sections():
    try:
        storage = Toml(HERE / "test.toml")
    except ImportError:
        pytest.skip("no TOML parser")
    assert storage[("train", "epochs")] == 3
    assert storage[("train", "arch")] == [2, 8, 3]
    assert storage[("tailor", "centroid_refresh")] == "once"


def test_yaml_nested_values():
    pytest.importorskip("yaml")
    storage = from_file(HERE / "test.yaml")
    assert storage[("log_level",)] == "debug"
    assert storage[("train", "batch_size")] == 16


def test_from_file_rejects_unknown_suffix(tmp_path):
    file = tmp_path / "settings.ini"
    file.write_text("")
    with pytest.raises(ConfigError):
        from_file(file)
