"""Tests for ablation grid parsing and the train/evaluate sweep."""

import json

import numpy as np
import pandas as pd
import pytest

from sdavs.ablation import SUMMARY_COLUMNS, expand_grid, parse_grid, run_ablation, setting_label
from sdavs.errors import ConfigError


def test_parse_inline_grid():
    grid = parse_grid('snrp=pre,off; rm_mode=mul ;seeds=0,1;damf=false;noise_scale=0.2')
    assert grid == {'snrp': ['pre', 'off'], 'rm_mode': ['mul'], 'seeds': [0, 1], 'damf': [False],
                    'noise_scale': [0.2]}


def test_parse_json_string_and_file(tmp_path):
    assert parse_grid('{"branch": ["a2v", "v2a"], "stc": false}') == {'branch': ['a2v', 'v2a'], 'stc': [False]}
    path = tmp_path / 'grid.json'
    path.write_text(json.dumps({'rm_mode': ['add'], 'noise': ['brownian']}), encoding='utf-8')
    assert parse_grid(str(path)) == {'rm_mode': ['add'], 'noise': ['brownian']}


@pytest.mark.parametrize('spec', ['{broken', 'snrp', 'missing.json'])
def test_parse_errors(spec):
    with pytest.raises(ConfigError):
        parse_grid(spec)


def test_expand_grid():
    settings, seeds, noises = expand_grid({'snrp': ['pre', 'off'], 'cfs': [True, False],
                                           'seeds': [3], 'noise': ['chirp_train']})
    assert settings == [{'snrp': 'pre', 'cfs': True}, {'snrp': 'pre', 'cfs': False},
                        {'snrp': 'off', 'cfs': True}, {'snrp': 'off', 'cfs': False}]
    assert (seeds, noises) == ([3], ['chirp_train'])
    assert expand_grid({}) == ([{}], [], [])
    with pytest.raises(ConfigError):
        expand_grid({'dropout': [0.1]})
    assert setting_label({}) == 'default'
    assert setting_label({'snrp': 'off', 'damf': False}) == 'snrp=off,damf=False'


def test_every_module_combination_trains(tiny_config, tmp_path):
    """Test all 27 SNRP placement × residual mode × branch settings for one epoch"""
    base = tiny_config.with_overrides(train_clips=2, eval_clips=1)
    grid = {'snrp': ['pre', 'off', 'post'], 'rm_mode': ['straight', 'add', 'mul'], 'branch': ['both', 'a2v', 'v2a']}
    summary = run_ablation(base, grid, tmp_path / 'grid', n_jobs=1)
    assert len(summary) == 27
    assert summary['setting'].nunique() == 27
    assert summary['config_hash'].nunique() == 27
    assert np.isfinite(summary[['J', 'F', 'J&F']].to_numpy()).all()
    assert (tmp_path / 'grid' / 'summary.csv').exists()


def test_seeds_and_noise_rows(tiny_config, tmp_path):
    base = tiny_config.with_overrides(train_clips=2)
    grid = parse_grid('damf=true,false;seeds=0,1;noise=brownian,none')
    summary = run_ablation(base, grid, tmp_path / 'grid', n_jobs=1, noise_scale=0.5)
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 2 * 2 * 2
    noisy = summary[summary['noise'] == 'brownian']
    clean = summary[summary['noise'] == 'clean'].set_index(['setting', 'seed'])
    for _, row in noisy.iterrows():
        expected = clean.loc[(row['setting'], row['seed']), 'J&F'] - row['J&F']
        assert row['degradation_jf'] == pytest.approx(expected)
        assert row['scale'] == 0.5
    written = pd.read_csv(tmp_path / 'grid' / 'summary.csv', dtype={'config_hash': str})
    pd.testing.assert_frame_equal(written, summary, check_dtype=False)
