"""
Toy-scale training experiments at the default configuration.

These train dozens of models for 60 epochs each and take hours on one CPU;
run them with ``pytest --runslow``. Every directional check must hold in at
least two of three seeds.
"""

import numpy as np
import pytest

from sdavs.config import RunConfig
from sdavs.data import generate_dataset
from sdavs.decoder import SMOOTH, compute_loss
from sdavs.evaluation import SegmentationEvaluator
from sdavs.model import SDAVSModel
from sdavs.trainer import SDAVSTrainer, train

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
ABLATIONS = {
    'full': {},
    'no_snrp': {'snrp': 'off'},
    'no_damf': {'damf': False},
    'no_stc': {'stc': False},
    'rm_straight': {'rm_mode': 'straight'},
    'a2v_only': {'branch': 'a2v'},
}


def majority(flags):
    return sum(bool(f) for f in flags) >= 2


@pytest.fixture(scope='module')
def experiments(tmp_path_factory):
    """(setting, seed) -> (train log, clean report, brownian 0.1 report)"""
    root = tmp_path_factory.mktemp('experiments')
    results = {}
    for seed in SEEDS:
        base = RunConfig(seed=seed)
        train_set = generate_dataset(seed, 'train', base.train_clips, base.height, base.width, base.frames)
        eval_set = generate_dataset(seed, 'eval', base.eval_clips, base.height, base.width, base.frames)
        for name, overrides in ABLATIONS.items():
            config = base.with_overrides(**overrides)
            state, log = train(config, root / f'{name}-{seed}', n_jobs=1, train_set=train_set)
            evaluator = SegmentationEvaluator(state)
            clean = evaluator.evaluate(eval_set, 'clean', n_jobs=1)
            noisy = evaluator.evaluate(eval_set, 'brownian', 0.1, n_jobs=1)
            noisy.compare_to(clean)
            results[name, seed] = (log, clean, noisy)
    return results


def test_initial_loss_matches_even_odds_oracle():
    """Test the untrained loss against the p = 0.5 closed form, within 20%"""
    config = RunConfig()
    dataset = generate_dataset(0, 'train', 4, config.height, config.width, config.frames)
    frames, spectrograms, gt = dataset.batch(range(4))
    loss = compute_loss(SDAVSModel(config)(frames, spectrograms).logits, gt).total.item()
    g = gt.sum(axis=(2, 3)).astype(np.float64)
    n = float(config.height * config.width)
    oracle = (np.log(2.0)
              + 1.0 - ((0.5 * g + SMOOTH) / (0.5 * n + 0.5 * g + SMOOTH)).mean()
              + 1.0 - ((g + SMOOTH) / (0.5 * n + g + SMOOTH)).mean())
    assert loss == pytest.approx(oracle, rel=0.2)


def test_single_clip_overfit_loss_decreases(tmp_path):
    """Test that 50 steps on one clip lower the loss, averaged over three seeds"""
    curves = []
    for seed in SEEDS:
        config = RunConfig(seed=seed, epochs=50, batch_size=1, milestones=[1000])
        one_clip = generate_dataset(seed, 'train', 1, config.height, config.width, config.frames)
        trainer = SDAVSTrainer(config, tmp_path / str(seed), n_jobs=1, train_set=one_clip)
        trainer.build_model()
        trainer.train()
        curves.append(trainer.training_log()['loss'].to_numpy())
    mean = np.mean(curves, axis=0)
    assert mean[-1] < mean[0]
    assert mean[-10:].mean() < mean[:10].mean()


def test_overfit_reaches_target(experiments):
    for seed in SEEDS:
        log = experiments['full', seed][0]
        assert log['train_jf'].iloc[-1] >= 0.90, seed


@pytest.mark.parametrize('ablation', [name for name in ABLATIONS if name != 'full'])
def test_full_model_beats_ablation(experiments, ablation):
    assert majority(experiments['full', s][1].aggregates['J&F'] >= experiments[ablation, s][1].aggregates['J&F']
                    for s in SEEDS)


def test_snrp_limits_noise_degradation(experiments):
    assert majority(experiments['full', s][2].degradation['J&F'] <= experiments['no_snrp', s][2].degradation['J&F']
                    for s in SEEDS)


@pytest.mark.parametrize('statistic, improves', [('cka', np.greater), ('kl', np.less), ('js', np.less)])
def test_fusion_improves_consistency(experiments, statistic, improves):
    flags = []
    for seed in SEEDS:
        clean = experiments['full', seed][1]
        before = clean.consistency_before.as_dict()[statistic]
        after = clean.consistency_after.as_dict()[statistic]
        flags.append(improves(after, before))
    assert majority(flags)
