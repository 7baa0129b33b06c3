"""Tests for environment configuration and the validated run configuration."""

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from sdavs import config as env_config
from sdavs.config import DevelopmentConfig, ProductionConfig, RunConfig, get_config
from sdavs.errors import ConfigError


def test_environment_selection(monkeypatch):
    assert isinstance(get_config(), env_config.TestingConfig)
    monkeypatch.setenv('SDAVS_ENV', 'production')
    assert isinstance(get_config(), ProductionConfig)
    monkeypatch.delenv('SDAVS_ENV')
    assert isinstance(get_config(), DevelopmentConfig)
    monkeypatch.setenv('SDAVS_ENV', 'staging')
    with pytest.raises(ConfigError):
        get_config()


def test_environment_values(monkeypatch, tmp_path):
    monkeypatch.delenv('SDAVS_LOG_LEVEL', raising=False)
    env = get_config()
    assert env.THREADS == 1
    assert env.LOG_LEVEL == 'WARNING'
    assert env.OUTPUT_DIR == tmp_path / 'runs'
    monkeypatch.setenv('SDAVS_THREADS', '4')
    monkeypatch.setenv('SDAVS_LOG_LEVEL', 'debug')
    env = get_config()
    assert env.THREADS == 4 and env.LOG_LEVEL == 'DEBUG'
    monkeypatch.setenv('SDAVS_THREADS', 'many')
    with pytest.raises(ConfigError):
        get_config()


def test_defaults():
    config = RunConfig()
    assert (config.height, config.width, config.frames) == (64, 64, 4)
    assert config.channels == (16, 32, 64, 128)
    assert (config.snrp, config.rm_mode, config.branch, config.query_pairing) == ('pre', 'mul', 'both', 'printed')
    assert config.lr_milestones() == [30, 45]
    assert config.with_overrides(milestones=[5]).lr_milestones() == [5]


def test_testing_config_is_tiny():
    config = env_config.TestingConfig.run_config(epochs=2)
    assert (config.height, config.frames, config.epochs) == (32, 2, 2)
    assert config.channels == (4, 8, 8, 8)
    assert config.reduction == 1


@pytest.mark.parametrize('values', [
    {'height': 48},
    {'frames': 0},
    {'rm_mode': 'concat'},
    {'unknown_knob': 1},
    {'lr': 0.0},
    {'gamma': 1.5},
    {'channels': [4, 8, 8]},
])
def test_invalid_values_are_config_errors(values):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(values)


def test_none_noise_means_clean():
    assert RunConfig.from_dict({'noise': 'none'}).noise == 'clean'


def test_hash_is_stable_and_sensitive():
    a, b = RunConfig(), RunConfig()
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    assert a.with_overrides(seed=1).config_hash() != a.config_hash()
    assert json.loads(a.canonical_json()) == a.model_dump(mode='json')


def test_json_round_trip(tmp_path):
    config = RunConfig(rm_mode='add', milestones=[3, 7], seed=9)
    path = tmp_path / 'config.json'
    config.to_json(path)
    assert RunConfig.from_json(path) == config
    assert RunConfig.from_json(path).config_hash() == config.config_hash()


def test_json_file_errors(tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        RunConfig.from_json(tmp_path / 'missing.json')
    bad = tmp_path / 'bad.json'
    bad.write_text('{nope', encoding='utf-8')
    with pytest.raises(ConfigError, match='not valid JSON'):
        RunConfig.from_json(bad)
    listed = tmp_path / 'list.json'
    listed.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(ConfigError, match='JSON object'):
        RunConfig.from_json(Path(listed))


def test_run_config_is_frozen():
    with pytest.raises(ValidationError):
        RunConfig().seed = 3
