"""
Gated recurrent cells over row-vector inputs.

Inputs are n×d_in, hidden states n×k; every gate is x @ W + h @ U + b.
GRU update: h' = (1 - z) * h + z * h_tilde.
"""

from dataclasses import dataclass, fields
from typing import Dict, Tuple

import numpy as np

from htgnn.core.tensor import Tensor, TensorLike, as_tensor, matmul, mul, parameter, sigmoid, tanh
from htgnn.errors import DimensionError


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class _CellWeights:
    """Shared helpers for weight bundles stored as dataclass fields"""

    def named(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_named(cls, params: Dict[str, Tensor], prefix: str):
        return cls(**{f.name: params[f"{prefix}.{f.name}"] for f in fields(cls)})

    @property
    def input_dim(self) -> int:
        return self.Wz.shape[0] if hasattr(self, "Wz") else self.Wi.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.Uz.shape[0] if hasattr(self, "Uz") else self.Ui.shape[0]

    def _check(self, x: Tensor, h: Tensor, cell: str):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"{cell} input {x.shape} does not match input dim {self.input_dim}")
        if h.ndim != 2 or h.shape[1] != self.hidden_dim or h.shape[0] != x.shape[0]:
            raise DimensionError(f"{cell} hidden {h.shape} does not match input {x.shape} and hidden dim {self.hidden_dim}")


@dataclass
class GRUWeights(_CellWeights):
    Wz: Tensor
    Uz: Tensor
    bz: Tensor
    Wr: Tensor
    Ur: Tensor
    br: Tensor
    Wh: Tensor
    Uh: Tensor
    bh: Tensor

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GRUWeights":
        values = {}
        for gate in ("z", "r", "h"):
            values[f"W{gate}"] = parameter(uniform_init(rng, (input_dim, hidden_dim), input_dim))
            values[f"U{gate}"] = parameter(uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim))
            values[f"b{gate}"] = parameter(uniform_init(rng, (hidden_dim,), input_dim))
        return cls(**values)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GRUWeights":
        values = {}
        for gate in ("z", "r", "h"):
            values[f"W{gate}"] = parameter(np.zeros((input_dim, hidden_dim)))
            values[f"U{gate}"] = parameter(np.zeros((hidden_dim, hidden_dim)))
            values[f"b{gate}"] = parameter(np.zeros(hidden_dim))
        return cls(**values)


@dataclass
class LSTMWeights(_CellWeights):
    Wi: Tensor
    Ui: Tensor
    bi: Tensor
    Wf: Tensor
    Uf: Tensor
    bf: Tensor
    Wo: Tensor
    Uo: Tensor
    bo: Tensor
    Wg: Tensor
    Ug: Tensor
    bg: Tensor

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LSTMWeights":
        values = {}
        for gate in ("i", "f", "o", "g"):
            values[f"W{gate}"] = parameter(uniform_init(rng, (input_dim, hidden_dim), input_dim))
            values[f"U{gate}"] = parameter(uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim))
            values[f"b{gate}"] = parameter(uniform_init(rng, (hidden_dim,), input_dim))
        return cls(**values)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LSTMWeights":
        values = {}
        for gate in ("i", "f", "o", "g"):
            values[f"W{gate}"] = parameter(np.zeros((input_dim, hidden_dim)))
            values[f"U{gate}"] = parameter(np.zeros((hidden_dim, hidden_dim)))
            values[f"b{gate}"] = parameter(np.zeros(hidden_dim))
        return cls(**values)


def _gate(x: Tensor, h: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    return matmul(x, W) + matmul(h, U) + b


def gru_cell(x: TensorLike, h: TensorLike, weights: GRUWeights) -> Tensor:
    x, h = as_tensor(x), as_tensor(h)
    weights._check(x, h, "gru_cell")
    z = sigmoid(_gate(x, h, weights.Wz, weights.Uz, weights.bz))
    r = sigmoid(_gate(x, h, weights.Wr, weights.Ur, weights.br))
    candidate = tanh(matmul(x, weights.Wh) + matmul(mul(r, h), weights.Uh) + weights.bh)
    return mul(1.0 - z, h) + mul(z, candidate)


def lstm_cell(x: TensorLike, h: TensorLike, c: TensorLike, weights: LSTMWeights) -> Tuple[Tensor, Tensor]:
    """One LSTM step; returns (h', c')"""
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    weights._check(x, h, "lstm_cell")
    if c.shape != h.shape:
        raise DimensionError(f"lstm_cell cell state {c.shape} does not match hidden {h.shape}")
    i = sigmoid(_gate(x, h, weights.Wi, weights.Ui, weights.bi))
    f = sigmoid(_gate(x, h, weights.Wf, weights.Uf, weights.bf))
    o = sigmoid(_gate(x, h, weights.Wo, weights.Uo, weights.bo))
    g = tanh(_gate(x, h, weights.Wg, weights.Ug, weights.bg))
    c_next = mul(f, c) + mul(i, g)
    return mul(o, tanh(c_next)), c_next
