"""
Differentiable neural-network ops on :class:`~sdavs.tensor.Tensor`.

Convolutions use an im2col formulation over ``sliding_window_view`` so the
same code serves 2-D (per-frame encoders) and 3-D (spatio-temporal) kernels.
Reductions run in a fixed order, so repeated calls are bit-identical.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .errors import ShapeError
from .tensor import Tensor, _result, as_tensor, reduce_mean

_SPATIAL = 'xyz'
_KERNEL = 'ijk'

IntOrTuple = Union[int, Sequence[int]]


def softmax_lastdim(x: Tensor) -> Tensor:
    """Max-subtracted softmax over the last axis"""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last axis, got {x.shape}")
    s = special.softmax(x.data, axis=-1).astype(x.dtype)

    def grad_fn(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (x,), grad_fn, 'softmax')


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5, axis: int = 1) -> Tensor:
    """Normalize over ``axis`` (the channel axis for feature maps), then scale and shift"""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axis = axis % x.ndim
    if gamma.size != x.shape[axis] or beta.size != x.shape[axis]:
        raise ShapeError(f"layer_norm affine size {gamma.size}/{beta.size} != extent {x.shape[axis]}")
    bshape = [1] * x.ndim
    bshape[axis] = -1
    g_, b_ = gamma.data.reshape(bshape), beta.data.reshape(bshape)
    other = tuple(i for i in range(x.ndim) if i != axis)

    centered = x.data - x.data.mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=axis, keepdims=True) + eps)
    xhat = centered * inv_std

    def grad_fn(g):
        gxhat = g * g_
        gx = inv_std * (gxhat - gxhat.mean(axis=axis, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True))
        return gx, (g * xhat).sum(axis=other).reshape(gamma.shape), g.sum(axis=other).reshape(beta.shape)

    return _result(xhat * g_ + b_, (x, gamma, beta), grad_fn, 'layer_norm')


def _as_tuple(value: IntOrTuple, n: int) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"expected {n} values, got {value}")
    return value


def _conv(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: IntOrTuple,
          padding: Union[str, IntOrTuple], depthwise: bool, nd: int, op: str) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != nd + 2 or weight.ndim != nd + 2:
        raise ShapeError(f"{op}: expected rank-{nd + 2} input and kernel, got {x.shape} and {weight.shape}")
    kernel = weight.shape[2:]
    if any(k % 2 == 0 for k in kernel):
        raise ShapeError(f"{op}: kernel extents must be odd, got {kernel}")
    channels = x.shape[1]
    if depthwise:
        if weight.shape[0] != channels or weight.shape[1] != 1:
            raise ShapeError(f"{op}: depthwise kernel {weight.shape} does not match {channels} channels")
    elif weight.shape[1] != channels:
        raise ShapeError(f"{op}: kernel expects {weight.shape[1]} input channels, got {channels}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"{op}: bias shape {bias.shape} != ({weight.shape[0]},)")

    strides = _as_tuple(stride, nd)
    pads = tuple(k // 2 for k in kernel) if padding == 'same' else _as_tuple(padding, nd)
    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pads])
    windows = sliding_window_view(xp, kernel, axis=tuple(range(2, 2 + nd)))
    windows = windows[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in strides)]
    out_sizes = windows.shape[2:2 + nd]
    s, k = _SPATIAL[:nd], _KERNEL[:nd]

    if depthwise:
        w = weight.data[:, 0]
        out = np.einsum(f'bc{s}{k},c{k}->bc{s}', windows, w)
    else:
        out = np.einsum(f'bc{s}{k},oc{k}->bo{s}', windows, weight.data, optimize=True)
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nd)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def grad_fn(g):
        if depthwise:
            gw = np.einsum(f'bc{s}{k},bc{s}->c{k}', windows, g)[:, None]
            cols = np.einsum(f'bc{s},c{k}->bc{s}{k}', g, w)
        else:
            gw = np.einsum(f'bc{s}{k},bo{s}->oc{k}', windows, g, optimize=True)
            cols = np.einsum(f'bo{s},oc{k}->bc{s}{k}', g, weight.data, optimize=True)
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for offset in np.ndindex(*kernel):
            region = tuple(slice(o, o + st * (n - 1) + 1, st) for o, st, n in zip(offset, strides, out_sizes))
            gxp[(slice(None), slice(None)) + region] += cols[(Ellipsis,) + offset]
        gx = gxp[(slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(pads, x.shape[2:]))]
        grads = (gx, gw)
        if bias is not None:
            grads += (g.sum(axis=(0,) + tuple(range(2, 2 + nd))),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, grad_fn, op)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: IntOrTuple = 1,
           padding: Union[str, IntOrTuple] = 'same', depthwise: bool = False) -> Tensor:
    """2-D convolution of an N×C×H×W input with a Cout×Cin×kh×kw kernel"""
    return _conv(x, weight, bias, stride, padding, depthwise, 2, 'conv2d')


def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: IntOrTuple = 1,
           padding: Union[str, IntOrTuple] = 'same', depthwise: bool = False) -> Tensor:
    """3-D convolution of a B×C×T×H×W input; depthwise kernels are C×1×kt×kh×kw"""
    return _conv(x, weight, bias, stride, padding, depthwise, 3, 'conv3d')


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the two trailing (H, W) axes, kept as size-1 axes"""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ShapeError(f"global_avg_pool needs non-empty H, W, got {x.shape}")
    return reduce_mean(x, axis=(-2, -1), keepdims=True)


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centres, source coordinate clamped to the edge samples
    dst = np.arange(n_out)
    src = np.clip((dst + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    matrix = np.zeros((n_out, n_in))
    matrix[dst, lo] += 1.0 - frac
    matrix[dst, hi] += frac
    return matrix


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the two trailing axes (align_corners=False)"""
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"upsample target must be positive, got ({out_h}, {out_w})")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return _result(x.data.copy(), (x,), lambda g: (g,), 'upsample_bilinear')
    mh = _interp_matrix(h, out_h).astype(x.dtype)
    mw = _interp_matrix(w, out_w).astype(x.dtype)
    out = np.einsum('...hw,Hh,Ww->...HW', x.data, mh, mw, optimize=True)

    def grad_fn(g):
        return (np.einsum('...HW,Hh,Ww->...hw', g, mh, mw, optimize=True),)

    return _result(np.ascontiguousarray(out), (x,), grad_fn, 'upsample_bilinear')


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis; ``weight`` is out×in"""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    lead = tuple(range(x.ndim - 1))

    def grad_fn(g):
        gw = np.tensordot(g, x.data, axes=(lead, lead)) if lead else np.outer(g, x.data)
        grads = (g @ weight.data, gw)
        if bias is not None:
            grads += (g.sum(axis=lead) if lead else g,)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out.astype(x.dtype, copy=False), parents, grad_fn, 'linear')


def mlp(x: Tensor, layers: Sequence[Tuple[Tensor, Optional[Tensor]]]) -> Tensor:
    """Stack of linear layers with ReLU between them (none after the last)"""
    for index, (weight, bias) in enumerate(layers):
        x = linear(x, weight, bias)
        if index < len(layers) - 1:
            x = x.relu()
    return x


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy computed from logits in the stable form"""
    logits = as_tensor(logits)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError(f"bce target {t.shape} != logits {logits.shape}")
    x = logits.data
    value = (np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))).mean()
    n = x.size

    def grad_fn(g):
        return ((special.expit(x) - t) * (g / n),)

    return _result(np.asarray(value, dtype=logits.dtype), (logits,), grad_fn, 'bce_with_logits')
