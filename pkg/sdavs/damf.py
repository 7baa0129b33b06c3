"""
Discriminative Audio-Visual Mutual Fusion.

Queries, keys and values come from STC projections (depthwise 3-D conv,
channel recalibration, layer norm). The query kernel spans three frames; key
and value kernels are 1×3×3 and never mix across time. Two single-head
cross-attentions over the flattened T·H·W tokens run in both directions and
each result is multiplied back onto its residual feature.

With the default ``query_pairing="printed"`` the video side supplies the a→v queries:
F_{a→v} = Attn(STC_q(F'_v), STC_k(F'_a), STC_v(F'_a)). ``query_pairing="textual"``
swaps which modality supplies the queries.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .nn import Conv3d, LayerNorm, Linear, Module
from .tensor import Tensor, as_tensor, matmul, reduce_mean, zeros

QUERY_KERNEL = (3, 3, 3)
KEY_VALUE_KERNEL = (1, 3, 3)
RM_MODES = ('straight', 'add', 'mul')
BRANCHES = ('both', 'a2v', 'v2a')


def car(x: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """X ⊙ σ(W₂ ReLU(W₁ GAP(X))), the gate broadcast over T, H, W"""
    x = as_tensor(x)
    if x.ndim != 5 or w1.shape[1] != x.shape[1] or w2.shape[0] != x.shape[1]:
        raise ShapeError(f"CAR weights {w1.shape}/{w2.shape} do not match feature {x.shape}")
    b, c = x.shape[:2]
    pooled = reduce_mean(x, axis=(2, 3, 4))
    gate = ops.linear(ops.linear(pooled, w1).relu(), w2).sigmoid()
    return x * gate.reshape(b, c, 1, 1, 1)


class CAR(Module):
    """Channel-wise adaptive recalibration with bias-free squeeze/excite weights"""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 4):
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, bias=False)
        self.fc2 = Linear(hidden, channels, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        return car(x, self.fc1.weight, self.fc2.weight)


class STC(Module):
    """LN(CAR(depthwise_conv3d(x)))"""

    def __init__(self, channels: int, kernel: Tuple[int, int, int], rng: np.random.Generator,
                 reduction: int = 4):
        self.conv = Conv3d(channels, channels, kernel, rng, depthwise=True)
        self.car = CAR(channels, rng, reduction)
        self.norm = LayerNorm(channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.car(self.conv(x)))


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """softmax(Q Kᵀ / √C) over flattened T·H·W tokens, B×Nq×Nk"""
    b, c = q.shape[:2]
    if k.shape[:2] != (b, c):
        raise ShapeError(f"query {q.shape} and key {k.shape} disagree on B or C")
    queries = q.reshape(b, c, -1).transpose(0, 2, 1)
    keys = k.reshape(b, c, -1)
    return ops.softmax_lastdim(matmul(queries, keys) * (1.0 / np.sqrt(c)))


def cross_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Single-head attention; output has the query's B×C×T×H×W shape"""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if int(np.prod(k.shape[2:])) != int(np.prod(v.shape[2:])) or k.shape[:2] != v.shape[:2]:
        raise ShapeError(f"key {k.shape} and value {v.shape} token layouts differ")
    b, c = v.shape[:2]
    weights = attention_weights(q, k)
    values = v.reshape(b, c, -1).transpose(0, 2, 1)
    return matmul(weights, values).transpose(0, 2, 1).reshape(q.shape)


@dataclass
class DamfOutput:
    a2v: Tensor         # F_{a→v}
    v2a: Tensor         # F_{v→a}
    fused_a2v: Tensor   # F'_{a→v}
    fused_v2a: Tensor   # F'_{v→a}


class DAMF(Module):
    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 4,
                 enabled: bool = True, use_stc: bool = True, rm_mode: str = 'mul',
                 branch: str = 'both', query_pairing: str = 'printed'):
        if rm_mode not in RM_MODES or branch not in BRANCHES or query_pairing not in ('printed', 'textual'):
            raise ConfigError(f"unknown DAMF option: rm_mode={rm_mode}, branch={branch}, "
                             f"query_pairing={query_pairing}")
        self.enabled = enabled
        self.use_stc = use_stc
        self.rm_mode = rm_mode
        self.branch = branch
        self.query_pairing = query_pairing
        self.stc_q = STC(channels, QUERY_KERNEL, rng, reduction)
        self.stc_k = STC(channels, KEY_VALUE_KERNEL, rng, reduction)
        self.stc_v = STC(channels, KEY_VALUE_KERNEL, rng, reduction)

    def _stc(self, projection: STC, x: Tensor) -> Tensor:
        return projection(x) if self.use_stc else x

    def _attend(self, query_source: Tensor, kv_source: Tensor) -> Tensor:
        return cross_attention(self._stc(self.stc_q, query_source),
                               self._stc(self.stc_k, kv_source),
                               self._stc(self.stc_v, kv_source))

    def residual(self, attended: Tensor, operand: Tensor) -> Tensor:
        if self.rm_mode == 'mul':
            return attended * operand
        if self.rm_mode == 'add':
            return attended + operand
        return attended

    def forward(self, f_v: Tensor, f_a: Tensor) -> DamfOutput:
        f_v, f_a = as_tensor(f_v), as_tensor(f_a)
        if f_v.shape != f_a.shape:
            raise ShapeError(f"DAMF needs equal shapes, got video {f_v.shape} and audio {f_a.shape}")
        if not self.enabled:
            return DamfOutput(f_a, f_v, f_a, f_v)

        printed = self.query_pairing == 'printed'
        empty = zeros(f_v.shape, dtype=f_v.dtype)
        a2v = v2a = fused_a2v = fused_v2a = empty
        if self.branch in ('both', 'a2v'):
            a2v = self._attend(f_v, f_a) if printed else self._attend(f_a, f_v)
            fused_a2v = self.residual(a2v, f_a)
        if self.branch in ('both', 'v2a'):
            v2a = self._attend(f_a, f_v) if printed else self._attend(f_v, f_a)
            fused_v2a = self.residual(v2a, f_v)
        return DamfOutput(a2v, v2a, fused_a2v, fused_v2a)
