"""
Central finite-difference gradient checks.

Both checks run the expression on a float64 shadow path by default
(``precision(np.float64)``), which separates autodiff mistakes from float32
rounding noise. The reported error is ‖analytic − numeric‖ / max(‖analytic‖,
‖numeric‖, 1e-8).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np

from .nn import Module
from .tensor import Tensor, no_grad, precision

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3


@dataclass
class GradCheckResult:
    errors: List[float] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    def passed(self, tol: float) -> bool:
        return self.max_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / scale)


def _evaluate(fn: Callable[..., Tensor], *args) -> float:
    with no_grad():
        return fn(*args).item()


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = DEFAULT_STEP,
                    dtype=np.float64) -> GradCheckResult:
    """Compare d fn / d input for every input array against central differences"""
    result = GradCheckResult()
    with precision(dtype):
        base = [np.array(x, dtype=dtype) for x in inputs]
        tensors = [Tensor(x, requires_grad=True) for x in base]
        fn(*tensors).backward()

        for position, tensor in enumerate(tensors):
            analytic = tensor.grad if tensor.grad is not None else np.zeros_like(base[position])
            numeric = np.zeros_like(base[position])
            for index in np.ndindex(*base[position].shape):
                shifted = [x.copy() for x in base]
                shifted[position][index] += h
                plus = _evaluate(fn, *[Tensor(x) for x in shifted])
                shifted[position][index] -= 2 * h
                minus = _evaluate(fn, *[Tensor(x) for x in shifted])
                numeric[index] = (plus - minus) / (2 * h)
            result.errors.append(relative_error(analytic, numeric))
            result.labels.append(f'input[{position}]')
    logger.debug(f"gradcheck inputs: max rel err {result.max_error:.2e}")
    return result


def check_module_gradients(module: Module, loss_fn: Callable[[], Tensor], rng: np.random.Generator,
                           samples: int = 3, h: float = DEFAULT_STEP, dtype=np.float64,
                           names: Sequence[str] = None) -> GradCheckResult:
    """Spot-check ``samples`` random entries of each selected parameter

    ``loss_fn`` takes no arguments and closes over the module and its inputs;
    the module is cast to ``dtype`` in place.
    """
    module.astype(dtype)
    module.zero_grad()
    params = dict(module.named_parameters())
    selected = list(names) if names is not None else list(params)
    result = GradCheckResult()
    with precision(dtype):
        loss_fn().backward()
        for name in selected:
            param = params[name]
            analytic, numeric = [], []
            for _ in range(samples):
                index = tuple(int(rng.integers(0, n)) for n in param.shape)
                grad = param.grad[index] if param.grad is not None else 0.0
                original = param.data[index]
                param.data[index] = original + h
                plus = _evaluate(loss_fn)
                param.data[index] = original - h
                minus = _evaluate(loss_fn)
                param.data[index] = original
                analytic.append(grad)
                numeric.append((plus - minus) / (2 * h))
            result.errors.append(relative_error(np.array(analytic), np.array(numeric)))
            result.labels.append(name)
    return result

