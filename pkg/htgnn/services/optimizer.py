"""
Adam with bias correction and decoupled weight decay.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from htgnn.core.tensor import Tensor
from htgnn.errors import NonFiniteError
from htgnn.model.params import ParamStore

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: OptimState) -> OptimState:
    """Update every parameter in `params` in place from `grads`

    All gradients are checked before any parameter moves.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient in parameter '{name}'")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        m = state.m.get(name, np.zeros_like(param.data))
        v = state.v.get(name, np.zeros_like(param.data))
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        param.data = param.data - update - state.lr * state.weight_decay * param.data
    return state


class Adam:
    """Steps the trainable tensors of a ParamStore; frozen tensors are skipped"""

    def __init__(self, params: ParamStore, lr: float = 0.01, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.state = OptimState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def _trainable(self) -> List[Tuple[str, Tensor]]:
        return self.params.trainable()

    def step(self):
        trainable = dict(self._trainable())
        grads = {name: p.grad for name, p in trainable.items() if p.grad is not None}
        adam_step(trainable, grads, self.state)

    def zero_grad(self, names: Optional[List[str]] = None):
        for name, param in self.params.items():
            if names is None or name in names:
                param.grad = None
