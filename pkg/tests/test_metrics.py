"""Tests for J, F-measure and the cross-modal consistency statistics."""

import numpy as np
import pytest
from scipy.stats import ortho_group
from sklearn.metrics import fbeta_score, jaccard_score

from sdavs.errors import ShapeError
from sdavs.metrics import (BETA_SQ, clip_scores, consistency, divergences, f_measure, feature_distributions,
                           frame_samples, j_and_f, jaccard, js_divergence, kl_divergence, linear_cka,
                           pooled_samples)


def test_three_by_three_example():
    """Test pred = top row, gt = top-left 2×2: J = 2/5, P = 2/3, R = 2/4"""
    pred = np.zeros((3, 3), dtype=np.uint8)
    pred[0] = 1
    gt = np.zeros((3, 3), dtype=np.uint8)
    gt[:2, :2] = 1
    assert jaccard(pred, gt) == pytest.approx(2 / 5)
    precision, recall = 2 / 3, 2 / 4
    expected = 1.3 * precision * recall / (0.3 * precision + recall)
    assert f_measure(pred, gt) == pytest.approx(expected)


def test_half_precision_full_recall():
    gt = np.array([1, 1, 0, 0])
    pred = np.array([1, 1, 1, 1])
    assert f_measure(pred, gt) == pytest.approx(0.65 / 1.15)   # 0.5652...
    assert j_and_f(pred, gt) == pytest.approx(0.5 * (0.5 + 0.65 / 1.15))


def test_against_sklearn(rng):
    for _ in range(10):
        gt = (rng.random((8, 8)) > 0.5).astype(int)
        pred = (rng.random((8, 8)) > 0.4).astype(int)
        assert jaccard(pred, gt) == pytest.approx(jaccard_score(gt.ravel(), pred.ravel()))
        assert f_measure(pred, gt) == pytest.approx(
            fbeta_score(gt.ravel(), pred.ravel(), beta=np.sqrt(BETA_SQ)))


def test_empty_mask_conventions():
    empty = np.zeros((4, 4))
    full = np.ones((4, 4))
    assert jaccard(empty, empty) == 1.0 and f_measure(empty, empty) == 1.0
    assert jaccard(full, empty) == 0.0 and f_measure(full, empty) == 0.0
    assert f_measure(empty, full) == 0.0
    with pytest.raises(ShapeError):
        jaccard(empty, np.zeros((4, 5)))


def test_clip_scores_average_frames():
    gt = np.zeros((2, 4, 4))
    gt[:, :2] = 1
    pred = gt.copy()
    pred[1] = 0
    scores = clip_scores(pred, gt)
    assert scores == {'J': 0.5, 'F': 0.5, 'J&F': 0.5}


def centred_hsic(k, l):
    n = len(k)
    h = np.eye(n) - np.ones((n, n)) / n
    return np.trace(k @ h @ l @ h)


def test_cka_matches_gram_matrix_definition(rng):
    x, y = rng.normal(size=(20, 5)), rng.normal(size=(20, 3))
    k, l = x @ x.T, y @ y.T
    expected = centred_hsic(k, l) / np.sqrt(centred_hsic(k, k) * centred_hsic(l, l))
    assert linear_cka(x, y) == pytest.approx(expected, rel=1e-9)


def test_cka_invariances(rng):
    """Test CKA(X, X) = 1, rotation and isotropic-scaling invariance, and symmetry"""
    x, y = rng.normal(size=(30, 6)), rng.normal(size=(30, 4))
    q = ortho_group.rvs(6, random_state=7)
    assert linear_cka(x, x) == pytest.approx(1.0)
    assert linear_cka(x, x @ q) == pytest.approx(1.0)
    assert linear_cka(x, y) == pytest.approx(linear_cka(3.5 * x @ q, y))
    assert linear_cka(x, y) == pytest.approx(linear_cka(y, x))
    assert 0.0 <= linear_cka(x, y) <= 1.0


def test_cka_degenerate_inputs(rng):
    x = rng.normal(size=(5, 2))
    assert linear_cka(x, np.ones((5, 3))) == 0.0
    with pytest.raises(ShapeError):
        linear_cka(x, x[:4])
    with pytest.raises(ShapeError):
        linear_cka(x[:1], x[:1])


def test_divergence_identities(rng):
    p = rng.dirichlet(np.ones(10))
    q = rng.dirichlet(np.ones(10))
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert js_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(p, q) > 0
    assert js_divergence(p, q) == pytest.approx(js_divergence(q, p))
    assert js_divergence(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(np.log(2.0))
    m = 0.5 * (p + q)
    assert js_divergence(p, q) == pytest.approx(0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m))


def test_kl_floor_keeps_support_mismatch_finite():
    value = kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    assert np.isfinite(value)
    assert value == pytest.approx(0.5 * np.log(0.5) + 0.5 * np.log(0.5 / 1e-12))


def test_sample_layouts(rng):
    feature = rng.normal(size=(2, 3, 4, 2, 2))
    pooled = pooled_samples(feature)
    assert pooled.shape == (8, 3)
    np.testing.assert_allclose(pooled[5], feature[1, :, 1].mean(axis=(1, 2)))
    frames = frame_samples(feature)
    assert frames.shape == (8, 12)
    np.testing.assert_array_equal(frames[5], feature[1, :, 1].ravel())
    dists = feature_distributions(frames)
    np.testing.assert_allclose(dists.sum(axis=1), 1.0)


def test_consistency_of_identical_features(rng):
    feature = rng.normal(size=(2, 3, 2, 2, 2))
    kl, js = divergences(feature, feature)
    assert len(kl) == len(js) == 4
    report = consistency(pooled_samples(feature), pooled_samples(feature), kl, js)
    assert report.as_dict() == pytest.approx({'cka': 1.0, 'kl': 0.0, 'js': 0.0}, abs=1e-9)
