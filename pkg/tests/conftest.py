"""Shared pytest fixtures and the ``--runslow`` switch for the acceptance experiments."""

import numpy as np
import pytest

from sdavs.config import TestingConfig
from sdavs.data import generate_dataset


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the slow training experiments')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full training experiments (minutes); needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def testing_env(monkeypatch, tmp_path):
    monkeypatch.setenv('SDAVS_ENV', 'testing')
    monkeypatch.setenv('SDAVS_OUTPUT_DIR', str(tmp_path / 'runs'))
    monkeypatch.delenv('SDAVS_THREADS', raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return TestingConfig.run_config()


@pytest.fixture(scope='session')
def tiny_train_set():
    cfg = TestingConfig.run_config()
    return generate_dataset(cfg.seed, 'train', cfg.train_clips, cfg.height, cfg.width, cfg.frames)


@pytest.fixture(scope='session')
def tiny_eval_set():
    cfg = TestingConfig.run_config()
    return generate_dataset(cfg.seed, 'eval', cfg.eval_clips, cfg.height, cfg.width, cfg.frames)
