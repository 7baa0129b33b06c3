"""
Selective Noise-Resilient Processor.

The audio feature is resized and projected onto the video grid, then two
audio-derived gates attenuate the video feature: a channel gate (pooled
audio through a squeeze-style MLP) and a spatial gate (a 1×3×3 conv that
collapses channels to one map). Both gates pass through a sigmoid, so the
processor can only attenuate.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import ops
from .errors import ShapeError
from .nn import Conv3d, Linear, Module
from .tensor import Tensor, as_tensor, ones

logger = logging.getLogger(__name__)


@dataclass
class SnrpOutput:
    audio: Tensor       # F'_a, projected audio
    video: Tensor       # F'_v, gated video
    gate_c: Tensor      # B×C×T×1×1
    gate_s: Tensor      # B×1×T×H×W


class SNRP(Module):
    def __init__(self, audio_channels: int, video_channels: int, rng: np.random.Generator,
                 reduction: int = 4, use_cfs: bool = True, use_sfs: bool = True):
        self.use_cfs = use_cfs
        self.use_sfs = use_sfs
        hidden = max(1, video_channels // reduction)
        self.project = Conv3d(audio_channels, video_channels, (1, 1, 1), rng)
        self.cfs_fc1 = Linear(video_channels, hidden, rng)
        self.cfs_fc2 = Linear(hidden, video_channels, rng)
        self.sfs_conv = Conv3d(video_channels, 1, (1, 3, 3), rng)

    def project_audio(self, f_a: Tensor, target_shape: Tuple[int, ...]) -> Tensor:
        """Bilinear resize to the video grid, then a 1×1×1 conv to the video channel count"""
        f_a = as_tensor(f_a)
        if f_a.shape[0] != target_shape[0] or f_a.shape[2] != target_shape[2]:
            raise ShapeError(f"audio {f_a.shape} and video {tuple(target_shape)} disagree on B or T")
        resized = ops.upsample_bilinear(f_a, target_shape[3], target_shape[4])
        return self.project(resized)

    def channel_gate(self, audio: Tensor) -> Tensor:
        b, c, t = audio.shape[:3]
        if not self.use_cfs:
            return ones((b, c, t, 1, 1), dtype=audio.dtype)
        pooled = ops.global_avg_pool(audio).reshape(b, c, t).transpose(0, 2, 1)
        logits = ops.mlp(pooled, [(self.cfs_fc1.weight, self.cfs_fc1.bias),
                                  (self.cfs_fc2.weight, self.cfs_fc2.bias)])
        return logits.sigmoid().transpose(0, 2, 1).reshape(b, c, t, 1, 1)

    def spatial_gate(self, audio: Tensor) -> Tensor:
        b, _, t, h, w = audio.shape
        if not self.use_sfs:
            return ones((b, 1, t, h, w), dtype=audio.dtype)
        return self.sfs_conv(audio).sigmoid()

    def channel_selector(self, audio: Tensor, f_v: Tensor) -> Tuple[Tensor, Tensor]:
        """(gate_c, F̃_v = F_v ⊙ gate_c)"""
        if audio.shape != f_v.shape:
            raise ShapeError(f"projected audio {audio.shape} != video {f_v.shape}")
        gate_c = self.channel_gate(audio)
        return gate_c, (f_v * gate_c if self.use_cfs else f_v)

    def spatial_selector(self, audio: Tensor, f_tilde: Tensor) -> Tuple[Tensor, Tensor]:
        """(gate_s, F'_v = F̃_v ⊙ gate_s)"""
        gate_s = self.spatial_gate(audio)
        return gate_s, (f_tilde * gate_s if self.use_sfs else f_tilde)

    def gate(self, audio: Tensor, x: Tensor) -> Tensor:
        """Apply both selectors, computed from F'_a, to an arbitrary feature of the same shape"""
        _, gated = self.channel_selector(audio, x)
        _, gated = self.spatial_selector(audio, gated)
        return gated

    def forward(self, f_a: Tensor, f_v: Tensor, apply_gates: bool = True) -> SnrpOutput:
        f_v = as_tensor(f_v)
        audio = self.project_audio(f_a, f_v.shape)
        if not apply_gates:
            b, c, t, h, w = f_v.shape
            return SnrpOutput(audio, f_v, ones((b, c, t, 1, 1), dtype=f_v.dtype),
                              ones((b, 1, t, h, w), dtype=f_v.dtype))
        gate_c, f_tilde = self.channel_selector(audio, f_v)
        gate_s, gated = self.spatial_selector(audio, f_tilde)
        return SnrpOutput(audio, gated, gate_c, gate_s)


@dataclass
class GateStatistics:
    """Running sums for foreground/background spatial-gate means and channel-gate spread"""
    fg_sum: float = 0.0
    fg_count: int = 0
    bg_sum: float = 0.0
    bg_count: int = 0
    c_std_sum: float = 0.0
    c_range_sum: float = 0.0
    c_count: int = 0

    def merge(self, other: 'GateStatistics') -> 'GateStatistics':
        return GateStatistics(*(a + b for a, b in zip(vars(self).values(), vars(other).values())))

    @staticmethod
    def _ratio(total: float, count: int) -> Optional[float]:
        return float(total / count) if count else None

    def summary(self) -> dict:
        fg = self._ratio(self.fg_sum, self.fg_count)
        bg = self._ratio(self.bg_sum, self.bg_count)
        return {
            'gate_s_fg_mean': fg,
            'gate_s_bg_mean': bg,
            'gate_s_contrast': None if fg is None or bg is None else fg - bg,
            'gate_c_std': self._ratio(self.c_std_sum, self.c_count),
            'gate_c_range': self._ratio(self.c_range_sum, self.c_count),
        }


def resize_mask(gt: np.ndarray, h: int, w: int) -> np.ndarray:
    """Block-average a ...×H×W binary mask onto an h×w grid (integer ratios), threshold 0.5"""
    H, W = gt.shape[-2:]
    if H % h or W % w:
        raise ShapeError(f"mask {H}×{W} cannot be pooled onto {h}×{w}")
    blocks = gt.reshape(gt.shape[:-2] + (h, H // h, w, W // w)).astype(np.float64)
    return blocks.mean(axis=(-3, -1)) >= 0.5


def gate_statistics(output: SnrpOutput, gt_mask: np.ndarray) -> GateStatistics:
    """``gt_mask`` is B×T×H×W at input resolution"""
    gate_s = output.gate_s.data[:, 0]
    b, t, h, w = gate_s.shape
    fg = resize_mask(np.asarray(gt_mask).reshape(b, t, *np.shape(gt_mask)[-2:]), h, w)
    gate_c = output.gate_c.data[:, :, :, 0, 0]
    return GateStatistics(
        fg_sum=float(gate_s[fg].sum()), fg_count=int(fg.sum()),
        bg_sum=float(gate_s[~fg].sum()), bg_count=int((~fg).sum()),
        c_std_sum=float(gate_c.std(axis=1).sum()),
        c_range_sum=float((gate_c.max(axis=1) - gate_c.min(axis=1)).sum()),
        c_count=b * t,
    )
