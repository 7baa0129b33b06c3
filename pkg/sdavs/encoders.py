"""
Small trainable encoders standing in for the pretrained visual and audio
backbones. Only their output interfaces matter downstream:

* visual: four levels at (H, W) / 4, 8, 16, 32 with the configured channel ladder
* audio: one B×C_a×T×12×8 map from the per-second 96×64 log-mel grids
"""

from typing import List, Sequence

import numpy as np

from .errors import ShapeError
from .nn import Conv2d, Module
from .tensor import Tensor, as_tensor

SPECTROGRAM_SHAPE = (96, 64)


def _frames_to_batch(x: Tensor) -> Tensor:
    """B×C×T×H×W -> (B·T)×C×H×W"""
    b, c, t, h, w = x.shape
    return x.transpose(0, 2, 1, 3, 4).reshape(b * t, c, h, w)


def _batch_to_frames(x: Tensor, b: int, t: int) -> Tensor:
    """(B·T)×C×H×W -> B×C×T×H×W"""
    _, c, h, w = x.shape
    return x.reshape(b, t, c, h, w).transpose(0, 2, 1, 3, 4)


class VisualStage(Module):
    """conv3×3 stride 2, ReLU, conv3×3"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.down = Conv2d(in_channels, out_channels, 3, rng, stride=2)
        self.refine = Conv2d(out_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.refine(self.down(x).relu())


class VisualEncoder(Module):
    def __init__(self, channels: Sequence[int], rng: np.random.Generator, stem_channels: int = 8):
        self.channels = list(channels)
        self.stem = Conv2d(3, stem_channels, 3, rng, stride=2)
        ladder = [stem_channels] + self.channels
        self.stages = [VisualStage(ladder[i], ladder[i + 1], rng) for i in range(len(self.channels))]

    def forward(self, frames: Tensor) -> List[Tensor]:
        """frames B×3×T×H×W -> pyramid, finest level first"""
        frames = as_tensor(frames)
        if frames.ndim != 5 or frames.shape[1] != 3:
            raise ShapeError(f"expected B×3×T×H×W frames, got {frames.shape}")
        b, _, t, h, w = frames.shape
        if h % 32 or w % 32:
            raise ShapeError(f"frame extents must be divisible by 32, got {h}×{w}")

        x = self.stem(_frames_to_batch(frames)).relu()
        pyramid = []
        for index, stage in enumerate(self.stages):
            x = stage(x if index == 0 else x.relu())
            pyramid.append(_batch_to_frames(x, b, t))
        return pyramid


class AudioEncoder(Module):
    """Three stride-2 conv stages over the (frame, mel) grid"""

    def __init__(self, channels: int, rng: np.random.Generator):
        ladder = [1, max(1, channels // 4), max(1, channels // 2), channels]
        self.convs = [Conv2d(ladder[i], ladder[i + 1], 3, rng, stride=2) for i in range(3)]

    def forward(self, spectrograms: Tensor) -> Tensor:
        """spectrograms B×T×96×64 -> B×C_a×T×12×8"""
        spectrograms = as_tensor(spectrograms)
        if spectrograms.ndim != 4 or spectrograms.shape[-2:] != SPECTROGRAM_SHAPE:
            raise ShapeError(f"expected B×T×96×64 spectrograms, got {spectrograms.shape}")
        b, t = spectrograms.shape[:2]
        x = spectrograms.reshape(b * t, 1, *SPECTROGRAM_SHAPE)
        for index, conv in enumerate(self.convs):
            x = conv(x)
            if index < len(self.convs) - 1:
                x = x.relu()
        return _batch_to_frames(x, b, t)
