"""
Dense tensor with reverse-mode automatic differentiation
=========================================================

Every feature map, weight and loss in SDAVS is a :class:`Tensor`: a numpy
array (float32 by default) plus an optional gradient buffer. Ops record their
parents and a gradient rule; :meth:`Tensor.backward` replays the recorded
graph in reverse topological order.

Broadcasting follows numpy (trailing/size-1 axes) and gradients are summed
back over broadcast axes. Every op checks its output for NaN/Inf and raises
:class:`~sdavs.errors.NonFiniteError` naming the op instead of propagating it.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .errors import GraphError, NonFiniteError, ShapeError

_state = threading.local()

ArrayLike = Union[np.ndarray, float, int, Sequence]


def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


def get_default_dtype():
    return getattr(_state, 'dtype', np.float32)


@contextmanager
def no_grad():
    """Run ops without recording a graph (evaluation, finite differences)"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def precision(dtype):
    """Set the dtype of newly created tensors; float64 gives the shadow evaluator"""
    previous = get_default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape of the operand it flows into"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_finite(data: np.ndarray, op: str, name: str = None):
    finite = np.isfinite(data)
    if not finite.all():
        raise NonFiniteError(op, tensor_name=name, count=int(finite.size - np.count_nonzero(finite)))


class Tensor:
    """N-dimensional float array that can carry a gradient"""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = np.array(data, dtype=dtype or get_default_dtype())
        _check_finite(self.data, 'tensor', name)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._grad_fn: Optional[Callable] = None
        self._op: Optional[str] = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._parents = ()
        out._grad_fn = None
        out._op = None
        return out

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._grad_fn is None

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data)

    def __repr__(self):
        grad = ', requires_grad=True' if self.requires_grad else ''
        label = f" '{self.name}'" if self.name else ''
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}{grad})"

    # -------------------------------------------------------------- autodiff
    def topological_order(self) -> list:
        """Nodes reachable from ``self`` that require grad, parents before children"""
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self):
        """Populate ``.grad`` of every requires_grad leaf with d self / d leaf"""
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(self.topological_order()):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._grad_fn is None:
                _check_finite(grad, 'backward', node.name or 'leaf')
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._grad_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(np.asarray(parent_grad, dtype=parent.dtype), parent.shape)
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def zero_grad(self):
        self.grad = None

    # ------------------------------------------------------------- operators
    def __add__(self, other):
        return ewise('add', self, other)

    def __radd__(self, other):
        return ewise('add', _lift(other, self), self)

    def __sub__(self, other):
        return ewise('sub', self, other)

    def __rsub__(self, other):
        return ewise('sub', _lift(other, self), self)

    def __mul__(self, other):
        return ewise('mul', self, other)

    def __rmul__(self, other):
        return ewise('mul', _lift(other, self), self)

    def __truediv__(self, other):
        return ewise('div', self, other)

    def __rtruediv__(self, other):
        return ewise('div', _lift(other, self), self)

    def __neg__(self):
        return ewise('mul', self, _lift(-1.0, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def sigmoid(self):
        return ewise('sigmoid', self)

    def relu(self):
        return ewise('relu', self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=like.dtype))


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _result(data: np.ndarray, parents: Iterable[Tensor], grad_fn: Callable, op: str) -> Tensor:
    data = np.asarray(data)
    _check_finite(data, op)
    out = Tensor._wrap(data)
    parents = tuple(parents)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
        out._op = op
    return out


# ---------------------------------------------------------------- elementwise
_BINARY = ('add', 'sub', 'mul', 'div')
_UNARY = ('sigmoid', 'relu')


def ewise(kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Elementwise op; binary kinds broadcast numpy-style"""
    a = as_tensor(a)
    if kind in _UNARY:
        if kind == 'sigmoid':
            s = special.expit(a.data)
            return _result(s, (a,), lambda g: (g * s * (1 - s),), 'sigmoid')
        mask = a.data > 0
        return _result(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), 'relu')

    if kind not in _BINARY:
        raise ValueError(f"unknown elementwise kind '{kind}'")
    if b is None:
        raise ValueError(f"'{kind}' needs two operands")
    b = _lift(b, a)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape} in '{kind}'") from None

    x, y = a.data, b.data
    if kind == 'add':
        return _result(x + y, (a, b), lambda g: (g, g), 'add')
    if kind == 'sub':
        return _result(x - y, (a, b), lambda g: (g, -g), 'sub')
    if kind == 'mul':
        return _result(x * y, (a, b), lambda g: (g * y, g * x), 'mul')
    return _result(x / y, (a, b), lambda g: (g / y, -g * x / (y * y)), 'div')


def add(a, b):
    return ewise('add', a, b)


def sub(a, b):
    return ewise('sub', a, b)


def mul(a, b):
    return ewise('mul', a, b)


def div(a, b):
    return ewise('div', a, b)


def sigmoid(a):
    return ewise('sigmoid', a)


def relu(a):
    return ewise('relu', a)


# --------------------------------------------------------------------- linear
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank 2..3 matrix product; a missing leading batch axis broadcasts"""
    a, b = as_tensor(a), as_tensor(b)
    if not (2 <= a.ndim <= 3 and 2 <= b.ndim <= 3):
        raise ShapeError(f"matmul expects rank 2..3 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0] and 1 not in (a.shape[0], b.shape[0]):
        raise ShapeError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def grad_fn(g):
        return g @ np.swapaxes(y, -1, -2), np.swapaxes(x, -1, -2) @ g

    return _result(x @ y, (a, b), grad_fn, 'matmul')


# ---------------------------------------------------------------------- shape
def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        data = a.data.reshape(tuple(shape)).copy()
    except ValueError:
        raise ShapeError(f"cannot reshape {original} into {tuple(shape)}") from None
    return _result(data, (a,), lambda g: (g.reshape(original),), 'reshape')


def transpose(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.ascontiguousarray(np.transpose(a.data, axes))
    return _result(data, (a,), lambda g: (np.transpose(g, inverse),), 'transpose')


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def grad_fn(g):
        return (np.broadcast_to(g.reshape(kept), shape).copy(),)

    return _result(a.data.sum(axis=axes, keepdims=keepdims), (a,), grad_fn, 'sum')


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))
    count = int(np.prod([shape[i] for i in axes])) if axes else 1

    def grad_fn(g):
        return (np.broadcast_to(g.reshape(kept) / count, shape).copy(),)

    return _result(a.data.mean(axis=axes, keepdims=keepdims), (a,), grad_fn, 'mean')


def take(a: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing as a copy op; gradient scatters back"""
    a = as_tensor(a)
    shape = a.shape
    data = np.array(a.data[index], copy=True)

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _result(data, (a,), grad_fn, 'take')


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn, 'concatenate')


def zeros(shape, dtype=None) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=dtype or get_default_dtype()))


def ones(shape, dtype=None) -> Tensor:
    return Tensor._wrap(np.ones(shape, dtype=dtype or get_default_dtype()))
