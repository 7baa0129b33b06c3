"""End-to-end tests of the sdavs command line (testing environment, tiny shapes)."""

import json

import pytest

from sdavs import cli
from sdavs.config import RunConfig
from sdavs.data import load_dataset
from sdavs.errors import NonFiniteError


@pytest.fixture
def trained(tmp_path):
    checkpoint = tmp_path / 'run' / 'model.sdavs'
    assert cli.main(['train', '--out', str(checkpoint)]) == 0
    return checkpoint


def test_gen_writes_dataset_and_wavs(tmp_path, capsys):
    out = tmp_path / 'data' / 'eval.sdavs'
    code = cli.main(['gen', '--split', 'eval', '--count', '2', '--out', str(out), '--wav-dir', str(tmp_path / 'wav')])
    assert code == 0
    dataset = load_dataset(out)
    assert len(dataset) == 2
    assert dataset[0].frames.shape == (2, 3, 32, 32)
    assert len(list((tmp_path / 'wav').glob('*.wav'))) == 2
    assert 'Wrote 2 eval clips' in capsys.readouterr().out


def test_train_writes_artifacts(trained):
    for name in ('model.sdavs', 'config.json', 'train_log.csv', 'TRAINING_REPORT.md'):
        assert (trained.parent / name).exists()


def test_eval_reports(trained, tmp_path, capsys):
    report = tmp_path / 'reports' / 'clean.json'
    assert cli.main(['eval', '--ckpt', str(trained), '--report', str(report), '--timing']) == 0
    summary = json.loads(report.read_text())
    assert summary['noise'] == {'kind': 'clean', 'scale': 0.0}
    assert 'timing' in summary
    assert report.with_suffix('.csv').exists()

    capsys.readouterr()
    assert cli.main(['eval', '--ckpt', str(trained), '--noise', 'chirp_train', '--scale', '0.5']) == 0
    assert 'Degradation' in capsys.readouterr().out


def test_eval_config_hash_guard(trained, tmp_path):
    other = tmp_path / 'other.json'
    RunConfig.from_json(trained.parent / 'config.json').with_overrides(seed=5).to_json(other)
    assert cli.main(['eval', '--ckpt', str(trained), '--config', str(other)]) == 1
    assert cli.main(['eval', '--ckpt', str(trained), '--config', str(other), '--force']) == 0


def test_inspect_lists_tensors(trained, capsys):
    assert cli.main(['inspect', '--ckpt', str(trained)]) == 0
    out = capsys.readouterr().out
    assert 'config_hash' in out
    assert 'head.fc.weight' in out
    assert 'total' in out


def test_plot_curves_and_overlay(trained, tmp_path):
    data = tmp_path / 'eval.sdavs'
    assert cli.main(['gen', '--split', 'eval', '--count', '1', '--out', str(data)]) == 0
    out = tmp_path / 'plots' / 'curves.png'
    assert cli.main(['plot', '--log', str(trained.parent / 'train_log.csv'), '--data', str(data),
                     '--out', str(out)]) == 0
    assert out.exists()
    assert (tmp_path / 'plots' / 'curves_clip0000.png').exists()


def test_ablate_inline_grid(tmp_path):
    out = tmp_path / 'ablation'
    assert cli.main(['ablate', '--grid', 'damf=true,false', '--out', str(out)]) == 0
    assert (out / 'summary.csv').exists()


def test_configuration_errors_exit_2(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'dropout': 0.5}), encoding='utf-8')
    assert cli.main(['train', '--config', str(bad), '--out', str(tmp_path / 'm.sdavs')]) == 2
    assert cli.main(['plot', '--out', str(tmp_path / 'x.png')]) == 2
    assert cli.main(['ablate', '--grid', 'dropout=0.1', '--out', str(tmp_path / 'a')]) == 2


def test_numeric_failure_exits_3(tmp_path, monkeypatch):
    def explode(self):
        raise NonFiniteError('sigmoid', 'logits', count=4)

    monkeypatch.setattr(cli.SDAVSTrainer, 'run_complete_pipeline', explode)
    assert cli.main(['train', '--out', str(tmp_path / 'm.sdavs')]) == 3


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        cli.main([])
    assert excinfo.value.code == 2


def test_plot_rejects_foreign_logs(tmp_path):
    log = tmp_path / 'log.csv'
    log.write_text('step,value\n1,2\n', encoding='utf-8')
    assert cli.main(['plot', '--log', str(log), '--out', str(tmp_path / 'x.png')]) == 2


def test_plot_feature_maps_per_stage(trained, tmp_path):
    data = tmp_path / 'eval.sdavs'
    assert cli.main(['gen', '--split', 'eval', '--count', '1', '--out', str(data)]) == 0
    out = tmp_path / 'plots' / 'maps.png'
    assert cli.main(['plot', '--data', str(data), '--features', '--ckpt', str(trained), '--frame', '1',
                     '--out', str(out)]) == 0
    for j in range(1, 5):
        assert (tmp_path / 'plots' / f'maps_clip0000_stage{j}.png').exists()
    assert cli.main(['plot', '--data', str(data), '--features', '--out', str(out)]) == 2
    assert cli.main(['plot', '--data', str(data), '--features', '--ckpt', str(trained), '--frame', '5',
                     '--out', str(out)]) == 1
