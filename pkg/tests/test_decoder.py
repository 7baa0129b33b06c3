"""Tests for the decoder stages, the mask head and the segmentation loss."""

import numpy as np
import pytest

from sdavs.decoder import SMOOTH, Decoder, DecoderStage, MaskHead, compute_loss
from sdavs.encoders import VisualEncoder
from sdavs.errors import ShapeError, TargetError
from sdavs.gradcheck import check_gradients
from sdavs.tensor import Tensor


@pytest.fixture
def gt(rng):
    mask = (rng.random((2, 1, 3, 4, 4)) > 0.6).astype(np.uint8)
    mask[0, 0, 1] = 0  # one empty frame
    return mask


def test_loss_at_even_odds(gt):
    """Test l_ce = ln 2 and the closed-form IoU/Dice terms when every p = 0.5"""
    loss = compute_loss(Tensor(np.zeros(gt.shape)), gt)
    g = gt.sum(axis=(1, 3, 4)).astype(np.float64)
    n = 16.0
    iou = (0.5 * g + SMOOTH) / (0.5 * n + 0.5 * g + SMOOTH)
    dice = (g + SMOOTH) / (0.5 * n + g + SMOOTH)
    assert loss.l_ce.item() == pytest.approx(np.log(2.0), rel=1e-5)
    assert loss.l_iou.item() == pytest.approx(1.0 - iou.mean(), rel=1e-5)
    assert loss.l_dice.item() == pytest.approx(1.0 - dice.mean(), rel=1e-5)
    assert loss.as_dict()['loss'] == pytest.approx(loss.l_ce.item() + loss.l_iou.item() + loss.l_dice.item())


def test_loss_vanishes_at_a_perfect_prediction(gt):
    logits = np.where(gt == 1, 30.0, -30.0)
    loss = compute_loss(Tensor(logits), gt)
    for value in loss.as_dict().values():
        assert 0.0 <= value < 1e-4


def test_loss_is_non_negative(rng, gt):
    for _ in range(5):
        assert all(v >= -1e-7 for v in compute_loss(Tensor(rng.normal(size=gt.shape) * 3), gt).as_dict().values())


def test_loss_accepts_frame_masks_and_rejects_bad_targets(gt):
    logits = Tensor(np.zeros(gt.shape))
    assert compute_loss(logits, gt[:, 0]).as_dict() == compute_loss(logits, gt).as_dict()
    with pytest.raises(TargetError):
        compute_loss(logits, gt * 2)
    with pytest.raises(ShapeError):
        compute_loss(logits, gt[:, :, :2])


def test_loss_gradient(rng, gt):
    result = check_gradients(lambda x: compute_loss(x, gt).total, [rng.normal(size=gt.shape)])
    assert result.passed(1e-5), result.errors


def pyramid_for(rng, channels, t=2):
    return VisualEncoder(channels, rng, stem_channels=4)(Tensor(rng.random((1, 3, t, 32, 32))))


def test_decoder_stage_shapes(rng):
    """Test that stages run coarsest first and each hands its successor a grid twice as fine"""
    channels = [4, 8, 8, 8]
    decoder = Decoder(channels, 6, rng)
    audio = Tensor(rng.normal(size=(1, 6, 2, 12, 8)))
    outputs = decoder(audio, pyramid_for(rng, channels))
    assert [out.snrp.video.shape[-2:] for out in outputs] == [(1, 1), (2, 2), (4, 4), (8, 8)]
    assert [out.video.shape for out in outputs] == [
        (1, 8, 2, 2, 2), (1, 8, 2, 4, 4), (1, 4, 2, 8, 8), (1, 4, 2, 8, 8)]
    fus_out = decoder.aggregate_outputs(outputs)
    assert fus_out.shape == (1, 4, 2, 8, 8)
    logits = MaskHead(4, rng)(fus_out, 32, 32)
    assert logits.shape == (1, 1, 2, 32, 32)


@pytest.mark.parametrize('snrp_mode', ['pre', 'off', 'post'])
def test_snrp_placement(rng, snrp_mode):
    stage = DecoderStage(4, 4, None, rng, snrp_mode=snrp_mode)
    f_a, f_v = Tensor(rng.normal(size=(1, 4, 2, 2, 2))), Tensor(rng.normal(size=(1, 4, 2, 2, 2)))
    out = stage(f_a, f_v)
    if snrp_mode == 'pre':
        assert not np.array_equal(out.snrp.video.data, f_v.data)
    else:
        np.testing.assert_array_equal(out.snrp.video.data, f_v.data)
    if snrp_mode == 'post':
        ungated = stage.damf(f_v, out.snrp.audio).fused_a2v
        gated = stage.snrp.gate(out.snrp.audio, ungated)
        np.testing.assert_allclose(out.damf.fused_a2v.data, gated.data, rtol=1e-5, atol=1e-6)


def test_decoder_rejects_wrong_pyramid(rng):
    channels = [4, 8, 8, 8]
    decoder = Decoder(channels, 6, rng)
    audio = Tensor(rng.normal(size=(1, 6, 2, 12, 8)))
    with pytest.raises(ShapeError):
        decoder(audio, pyramid_for(rng, channels)[:3])
    stage = DecoderStage(4, 4, 4, rng)
    with pytest.raises(ShapeError):
        stage(Tensor(np.zeros((1, 4, 1, 2, 2))), Tensor(np.zeros((1, 4, 1, 2, 2))))
