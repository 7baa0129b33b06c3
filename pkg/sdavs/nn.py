"""
Parameter containers and the layer classes the SDAVS network is built from.

A :class:`Module` discovers its parameters by walking its attributes
(parameters, sub-modules and lists of sub-modules) in assignment order, so
parameter names and checkpoint layout are stable across runs.
"""

import logging
from typing import Dict, Iterator, Sequence, Tuple, Union

import numpy as np

from . import ops
from .errors import CheckpointError, ShapeError
from .tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """Trainable leaf tensor"""

    def __init__(self, data, name: str = None):
        super().__init__(data, requires_grad=True, name=name)


def fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """He-style uniform init, bound sqrt(6 / fan_in)"""
    bound = np.sqrt(6.0 / max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Module:
    """Base class: parameter discovery, state dicts and dtype casting"""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            name = f'{prefix}{attr}'
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f'{name}.')
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f'{name}.{index}.')

    def named_modules(self, prefix: str = '') -> Iterator[Tuple[str, 'Module']]:
        yield prefix.rstrip('.'), self
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_modules(f'{prefix}{attr}.')
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_modules(f'{prefix}{attr}.{index}.')

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def assign_names(self):
        """Label every parameter with its dotted path (used in NaN diagnostics)"""
        for name, param in self.named_parameters():
            param.name = name
        return self

    def num_parameters(self) -> int:
        return int(sum(param.size for param in self.parameters()))

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def astype(self, dtype):
        """Cast every parameter in place (float64 for gradient checks)"""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        params = dict(self.named_parameters())
        missing = [name for name in params if name not in state]
        unexpected = [name for name in state if name not in params]
        if strict and (missing or unexpected):
            raise CheckpointError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(f"tensor '{name}' has shape {value.shape}, model expects {param.shape}")
            param.data = value.astype(param.dtype, copy=True)
            param.grad = None
        logger.debug(f"Loaded {len(params)} tensors")
        return self


class Linear(Module):
    """y = x Wᵀ + b over the last axis"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(fan_in_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: Union[int, Tuple[int, int]],
                 rng: np.random.Generator, stride: int = 1, bias: bool = True):
        kernel = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        self.stride = stride
        self.weight = Parameter(fan_in_uniform(rng, (out_channels, in_channels) + kernel,
                                               in_channels * int(np.prod(kernel))))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride)


class Conv3d(Module):
    """Dense or depthwise 3-D convolution with SAME padding"""

    def __init__(self, in_channels: int, out_channels: int, kernel: Sequence[int],
                 rng: np.random.Generator, depthwise: bool = False, bias: bool = True):
        kernel = (kernel,) * 3 if isinstance(kernel, int) else tuple(kernel)
        self.depthwise = depthwise
        if depthwise:
            if in_channels != out_channels:
                raise ShapeError("depthwise convolution keeps the channel count")
            shape, fan_in = (out_channels, 1) + kernel, int(np.prod(kernel))
        else:
            shape, fan_in = (out_channels, in_channels) + kernel, in_channels * int(np.prod(kernel))
        self.weight = Parameter(fan_in_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, depthwise=self.depthwise)


class LayerNorm(Module):
    """Channel-axis layer norm, gamma=1 and beta=0 at init"""

    def __init__(self, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, eps=self.eps, axis=1)
