"""
Ablation switches: how attention starts, how it evolves, how neighbors are aggregated.

Interpretations used here
    init random     seeded uniform(0, 1) draws, softmax per target type
    init average    1 / |R(v)| for every relation
    init zero       all-zero hidden state
    attention gated e_t = g * e_prev + (1 - g) * (H Ws + bs), g = sigmoid(H Wg + bg)
    attention self  causal dot-product attention over per-snapshot mean representations
    aggregation none  a relation contributes the target type's own representation
"""

import logging
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from htgnn.core.tensor import Tensor, concat, matmul, mean, mul, reshape, sigmoid, softmax, swapaxes
from htgnn.data.graph import RelationType
from htgnn.errors import DimensionError, ModelError

logger = logging.getLogger(__name__)

InitKind = Literal["llm", "random", "average", "zero"]
AttentionKind = Literal["dynamic", "projected", "self", "gated", "lstm"]
AggregationKind = Literal["simplified", "gcn", "gat", "none"]

INIT_KINDS = ("llm", "random", "average", "zero")
ATTENTION_KINDS = ("dynamic", "projected", "self", "gated", "lstm")
AGGREGATION_KINDS = ("simplified", "gcn", "gat", "none")


class VariantConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    init: InitKind = "llm"
    attention: AttentionKind = "dynamic"
    aggregation: AggregationKind = "simplified"

    @property
    def label(self) -> str:
        return f"{self.init}-{self.attention}-{self.aggregation}"

    @property
    def uses_initial_state(self) -> bool:
        """Whether the attention chain starts from an initial coefficient"""
        return self.attention in ("dynamic", "gated", "lstm")


def variant_init(kind: str, relations: Mapping[str, Sequence[RelationType]], seed: int = 0,
                 llm: Optional[Callable[[], Dict[str, Tensor]]] = None) -> Dict[str, Tensor]:
    """Initial coefficient vector over R(v) for every target type v"""
    if kind == "llm":
        if llm is None:
            raise ModelError("llm initialization needs type embeddings")
        return llm()
    coefficients = {}
    rng = np.random.default_rng([seed, 7])
    for target, incoming in relations.items():
        size = len(incoming)
        if size == 0:
            raise ModelError(f"type '{target}' has no incoming relations")
        if kind == "random":
            coefficients[target] = softmax(Tensor(rng.uniform(0.0, 1.0, size=size)))
        elif kind == "average":
            coefficients[target] = Tensor(np.full(size, 1.0 / size))
        elif kind == "zero":
            coefficients[target] = Tensor(np.zeros(size))
        else:
            raise ModelError(f"Unknown init kind '{kind}', expected one of {INIT_KINDS}")
    return coefficients


def gated_attention_step(h: Tensor, e_prev: Tensor, Wg: Tensor, bg: Tensor, Ws: Tensor, bs: Tensor) -> Tensor:
    gate = sigmoid(matmul(h, Wg) + bg)
    return mul(gate, e_prev) + mul(1.0 - gate, matmul(h, Ws) + bs)


def causal_self_attention_step(history: List[Tensor], Wq: Tensor, Wk: Tensor, Ws: Tensor, bs: Tensor) -> Tensor:
    """Score of the latest step, attending over itself and every earlier step

    `history` holds 1 x d mean representations in temporal order; returns 1 x k.
    """
    if not history:
        raise ModelError("self attention needs at least one step")
    d = history[-1].shape[1]
    if Wq.shape[0] != d:
        raise DimensionError(f"self attention input dim {d} vs query weight {Wq.shape}")
    steps = concat(history, axis=0)
    query = matmul(history[-1], Wq)
    keys = matmul(steps, Wk)
    logits = reshape(matmul(keys, swapaxes(query, 0, 1)), (len(history),)) * (1.0 / np.sqrt(Wq.shape[1]))
    weights = reshape(softmax(logits), (1, len(history)))
    return matmul(weights, matmul(steps, Ws) + bs)


def mean_row(h: Tensor) -> Tensor:
    return reshape(mean(h, axis=0), (1, h.shape[1]))
