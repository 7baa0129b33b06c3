"""
Four-stage fusion decoder, mask head and segmentation loss.

Stage j (j = 1 coarsest) runs SNRP and DAMF at encoder level 5 − j and hands
the next stage

* video: conv(up2×(F'_{a→v} + F'_{v→a})) + 1×1 proj(encoder skip at the finer level)
* audio: 1×1 proj(up2×(F'_a))

The last stage works at the finest level and passes its features through
unchanged. Every stage's output pair is projected to the finest channel
count, upsampled to the finest resolution and summed into Fus_out, which a
per-pixel MLP and a final FC layer turn into one logit per pixel.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import ops
from .damf import DAMF, DamfOutput
from .errors import ShapeError, TargetError
from .nn import Conv3d, Linear, Module
from .snrp import SNRP, SnrpOutput
from .tensor import Tensor, as_tensor

SMOOTH = 1.0


@dataclass
class StageOutput:
    snrp: SnrpOutput
    damf: DamfOutput
    audio: Tensor      # F^{j+1}_a
    video: Tensor      # F^{j+1}_v
    video_in: Tensor   # F^j_v, the video feature entering SNRP


class DecoderStage(Module):
    def __init__(self, audio_channels: int, channels: int, next_channels: Optional[int],
                 rng: np.random.Generator, snrp_mode: str = 'pre', reduction: int = 4,
                 use_cfs: bool = True, use_sfs: bool = True, **damf_options):
        self.snrp_mode = snrp_mode
        self.last = next_channels is None
        self.snrp = SNRP(audio_channels, channels, rng, reduction, use_cfs=use_cfs, use_sfs=use_sfs)
        self.damf = DAMF(channels, rng, reduction, **damf_options)
        if not self.last:
            self.fuse = Conv3d(channels, next_channels, (1, 3, 3), rng)
            self.skip = Conv3d(next_channels, next_channels, (1, 1, 1), rng)
            self.audio_proj = Conv3d(channels, next_channels, (1, 1, 1), rng)

    def forward(self, f_a: Tensor, f_v: Tensor, enc_skip: Optional[Tensor] = None) -> StageOutput:
        snrp_out = self.snrp(f_a, f_v, apply_gates=self.snrp_mode == 'pre')
        fused = self.damf(snrp_out.video, snrp_out.audio)
        a2v, v2a = fused.fused_a2v, fused.fused_v2a
        if self.snrp_mode == 'post':
            a2v = self.snrp.gate(snrp_out.audio, a2v)
            v2a = self.snrp.gate(snrp_out.audio, v2a)
            fused = DamfOutput(fused.a2v, fused.v2a, a2v, v2a)
        combined = a2v + v2a

        if self.last:
            return StageOutput(snrp_out, fused, snrp_out.audio, combined, as_tensor(f_v))
        if enc_skip is None:
            raise ShapeError("intermediate decoder stages need an encoder skip feature")
        h, w = combined.shape[-2:]
        if enc_skip.shape[-2:] != (2 * h, 2 * w):
            raise ShapeError(f"skip {enc_skip.shape} is not one level finer than stage grid {h}×{w}")
        video = self.fuse(ops.upsample_bilinear(combined, 2 * h, 2 * w)) + self.skip(enc_skip)
        audio = self.audio_proj(ops.upsample_bilinear(snrp_out.audio, 2 * h, 2 * w))
        return StageOutput(snrp_out, fused, audio, video, as_tensor(f_v))


class Decoder(Module):
    def __init__(self, channels: Sequence[int], audio_channels: int, rng: np.random.Generator,
                 snrp_mode: str = 'pre', reduction: int = 4, **stage_options):
        # stage j works on the (5 - j)-th level; channels are listed finest first
        ladder = list(reversed(channels))
        self.stages = []
        for j, width in enumerate(ladder):
            incoming = audio_channels if j == 0 else width
            following = ladder[j + 1] if j + 1 < len(ladder) else None
            self.stages.append(DecoderStage(incoming, width, following, rng, snrp_mode, reduction,
                                            **stage_options))
        finest = ladder[-1]
        self.aggregate = [Conv3d(ladder[j + 1] if j + 1 < len(ladder) else finest, finest, (1, 1, 1), rng)
                          for j in range(len(ladder))]

    def forward(self, f_a: Tensor, pyramid: List[Tensor]) -> List[StageOutput]:
        if len(pyramid) != len(self.stages):
            raise ShapeError(f"decoder has {len(self.stages)} stages but the pyramid has {len(pyramid)} levels")
        levels = list(reversed(pyramid))
        outputs = []
        audio, video = f_a, levels[0]
        for j, stage in enumerate(self.stages):
            skip = levels[j + 1] if j + 1 < len(levels) else None
            out = stage(audio, video, skip)
            outputs.append(out)
            audio, video = out.audio, out.video
        return outputs

    def aggregate_outputs(self, outputs: List[StageOutput]) -> Tensor:
        """Fus_out = Σ_j up_max(conv_j(F^{j+1}_a + F^{j+1}_v))"""
        h, w = outputs[-1].video.shape[-2:]
        total = None
        for conv, out in zip(self.aggregate, outputs):
            term = ops.upsample_bilinear(conv(out.audio + out.video), h, w)
            total = term if total is None else total + term
        return total


class MaskHead(Module):
    """Per-pixel MLP over channels, then the 1-channel FC, then resize to the input grid"""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.hidden = Linear(channels, channels, rng)
        self.fc = Linear(channels, 1, rng)

    def forward(self, fus_out: Tensor, out_h: int, out_w: int) -> Tensor:
        pixels = fus_out.transpose(0, 2, 3, 4, 1)
        logits = ops.mlp(pixels, [(self.hidden.weight, self.hidden.bias), (self.fc.weight, self.fc.bias)])
        return ops.upsample_bilinear(logits.transpose(0, 4, 1, 2, 3), out_h, out_w)


@dataclass
class LossBreakdown:
    l_ce: Tensor
    l_iou: Tensor
    l_dice: Tensor

    @property
    def total(self) -> Tensor:
        return self.l_ce + self.l_iou + self.l_dice

    def as_dict(self) -> dict:
        return {'loss': self.total.item(), 'l_ce': self.l_ce.item(),
                'l_iou': self.l_iou.item(), 'l_dice': self.l_dice.item()}


def compute_loss(logits: Tensor, gt) -> LossBreakdown:
    """BCE + soft IoU + soft Dice, the overlap terms per (clip, frame) with ε = 1"""
    logits = as_tensor(logits)
    target = np.asarray(gt)
    if target.shape != logits.shape:
        if target.ndim == logits.ndim - 1 and logits.shape[1] == 1:
            target = target[:, None]
        if target.shape != logits.shape:
            raise ShapeError(f"gt {np.shape(gt)} does not match logits {logits.shape}")
    if not np.isin(target, (0, 1)).all():
        raise TargetError("ground-truth mask must contain only 0 and 1")
    target = target.astype(logits.dtype)

    spatial = tuple(range(3, logits.ndim)) if logits.ndim == 5 else tuple(range(1, logits.ndim))
    reduce_axes = (1,) + spatial if logits.ndim == 5 else spatial
    p = logits.sigmoid()
    inter = (p * target).sum(axis=reduce_axes)
    p_sum = p.sum(axis=reduce_axes)
    g_sum = target.sum(axis=reduce_axes)

    l_iou = 1.0 - ((inter + SMOOTH) / (p_sum + g_sum - inter + SMOOTH)).mean()
    l_dice = 1.0 - ((inter * 2.0 + SMOOTH) / (p_sum + g_sum + SMOOTH)).mean()
    return LossBreakdown(ops.bce_with_logits(logits, target), l_iou, l_dice)
