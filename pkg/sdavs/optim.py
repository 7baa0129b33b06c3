"""
AdamW with decoupled weight decay and a multi-step learning-rate schedule.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .nn import Parameter

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Moment buffers and hyperparameters for AdamW"""
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    exp_avg: List[np.ndarray] = field(default_factory=list)
    exp_avg_sq: List[np.ndarray] = field(default_factory=list)

    def init_buffers(self, params: Sequence[np.ndarray]):
        self.exp_avg = [np.zeros_like(p) for p in params]
        self.exp_avg_sq = [np.zeros_like(p) for p in params]
        self.step = 0


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]],
               state: OptimizerState) -> Sequence[np.ndarray]:
    """Update ``params`` in place; ``None`` grads leave their parameter untouched"""
    if not state.exp_avg:
        state.init_buffers(params)
    if not (len(params) == len(grads) == len(state.exp_avg)):
        raise ShapeError(f"{len(params)} params, {len(grads)} grads, {len(state.exp_avg)} moment buffers")

    state.step += 1
    beta1, beta2 = state.betas
    bias_correction1 = 1.0 - beta1 ** state.step
    bias_correction2 = 1.0 - beta2 ** state.step

    for index, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m, v = state.exp_avg[index], state.exp_avg_sq[index]
        if not (p.shape == g.shape == m.shape):
            raise ShapeError(f"parameter {index}: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g

        if state.weight_decay:
            p *= 1.0 - state.lr * state.weight_decay
        denom = np.sqrt(v / bias_correction2) + state.eps
        p -= (state.lr * (m / bias_correction1) / denom).astype(p.dtype)
    return params


class AdamW:
    """Optimizer over a list of :class:`~sdavs.nn.Parameter`"""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-2):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)
        self.state.init_buffers([p.data for p in self.params])

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = float(value)

    def step(self):
        adamw_step([p.data for p in self.params], [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def lr_multistep(step: int, milestones: Sequence[int], gamma: float, base_lr: float = 1.0) -> float:
    """base_lr · gamma^k, k = number of milestones ≤ step"""
    passed = sum(1 for milestone in milestones if step >= milestone)
    return base_lr * gamma ** passed


def default_milestones(epochs: int) -> List[int]:
    return sorted({max(1, round(epochs * 0.5)), max(1, round(epochs * 0.75))})


class MultiStepLR:
    """Epoch-level schedule; call ``step()`` once at the end of every epoch"""

    def __init__(self, optimizer: AdamW, milestones: Sequence[int], gamma: float = 0.1):
        self.optimizer = optimizer
        self.milestones = sorted(milestones)
        self.gamma = gamma
        self.base_lr = optimizer.lr
        self.epoch = 0

    def get_lr(self) -> float:
        return lr_multistep(self.epoch, self.milestones, self.gamma, self.base_lr)

    def step(self):
        self.epoch += 1
        lr = self.get_lr()
        if lr != self.optimizer.lr:
            logger.info(f"📉 Learning rate {self.optimizer.lr:.2e} -> {lr:.2e} at epoch {self.epoch}")
        self.optimizer.lr = lr
