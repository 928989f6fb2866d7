import json
from pathlib import Path

import pytest

from services.config_service import (
    EXPERIMENTS,
    ExperimentConfig,
    config_hash,
    experiment_defaults,
    load_config,
    load_settings,
)
from services.error_handler import ConfigInvalid


def write_config(path: Path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


def test_every_experiment_has_defaults():
    for name in EXPERIMENTS:
        resolved = ExperimentConfig(name).validate()
        assert resolved.params == experiment_defaults(name)


def test_validate_merges_defaults_and_coerces_numbers():
    resolved = ExperimentConfig("phase", params={"trials": 10, "band": 0.75}).validate()
    assert resolved.params["trials"] == 10
    assert resolved.params["band"] == 0.75
    assert resolved.params["K"] == 2
    resolved = ExperimentConfig("lti", params={"alpha": 1 / 2, "t": 1}).validate()
    assert isinstance(resolved.params["t"], float)


def test_validate_does_not_mutate_the_original():
    config = ExperimentConfig("walsh", params={"max_n": 64})
    config.validate()
    assert config.params == {"max_n": 64}


@pytest.mark.parametrize(
    "experiment, params",
    [
        ("phase", {"K": 4}),
        ("phase", {"band": 1.0}),
        ("phase", {"trials": "many"}),
        ("phase", {"anchor_floor": 0.0}),
        ("divergence", {"ns": [16, 8]}),
        ("divergence", {"ns": [8, 16.5]}),
        ("lti", {"bins": [1, 2]}),
        ("lti", {"identity_pairs": 0}),
        ("walsh", {"unknown": 1}),
        ("oversampling", {"T": 30.0, "ns": [16, 32]}),
        ("oversampling", {"window_margin": -1.0}),
        ("oversampling", {"amplitude": 0.2, "g_scale": 0.3}),
        ("oversampling", {"amplitude": 0.5, "g_scale": 0.3}),
        ("convergence", {"trials": True}),
    ],
)
def test_invalid_parameters_are_rejected(experiment, params):
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(experiment, params=params).validate()


def test_unknown_experiment_and_bad_seed():
    with pytest.raises(ConfigInvalid):
        ExperimentConfig("fourier").validate()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig("walsh", seed=-1).validate()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig("walsh", output_dir="").validate()


def test_from_dict_checks_keys():
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"experiment": "walsh", "threads": 4})
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict(["walsh"])


def test_to_dict_is_lossless():
    config = ExperimentConfig("lti", seed=7, output_dir="out/lti", params={"bins": [64, 128]})
    assert ExperimentConfig.from_dict(config.to_dict()) == config


def test_config_hash_is_stable_and_sensitive():
    a = ExperimentConfig("walsh", seed=1).validate()
    b = ExperimentConfig("walsh", seed=1).validate()
    c = ExperimentConfig("walsh", seed=2).validate()
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 64


def test_load_config_from_file(tmp_path):
    path = write_config(tmp_path / "walsh.json", {"experiment": "walsh", "params": {"max_n": 32}})
    config = load_config(path, default_output_dir="elsewhere")
    assert config.experiment == "walsh"
    assert config.output_dir == "elsewhere"
    assert config.params == {"max_n": 32}

    explicit = write_config(tmp_path / "explicit.json", {"experiment": "walsh", "output_dir": "mine"})
    assert load_config(explicit, default_output_dir="elsewhere").output_dir == "mine"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(str(broken))


def test_settings_defaults(in_tmp_dir):
    settings = load_settings()
    assert settings.threads >= 1
    assert settings.log_level == "INFO"
    assert settings.output_dir == Path("results")


def test_settings_from_environment(in_tmp_dir, monkeypatch):
    monkeypatch.setenv("PWLAB_THREADS", "3")
    monkeypatch.setenv("PWLAB_LOG_LEVEL", "debug")
    monkeypatch.setenv("PWLAB_OUTPUT_DIR", "runs")
    settings = load_settings()
    assert settings.threads == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_dir == Path("runs")


def test_settings_from_env_file(in_tmp_dir):
    env_file = in_tmp_dir / "custom.env"
    env_file.write_text("PWLAB_THREADS=2\n")
    assert load_settings(str(env_file)).threads == 2


@pytest.mark.parametrize("name, value", [("PWLAB_THREADS", "abc"), ("PWLAB_THREADS", "0"), ("PWLAB_LOG_LEVEL", "LOUD")])
def test_invalid_settings(in_tmp_dir, monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigInvalid):
        load_settings()
