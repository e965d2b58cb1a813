import logging
from typing import Dict, Mapping, Sequence

import numpy as np

from htgnn.core.tensor import Tensor, as_tensor, matmul, reshape, softmax, stack, tsum
from htgnn.data.graph import RelationType
from htgnn.errors import DimensionError, ModelError

logger = logging.getLogger(__name__)


def relation_similarity(h_src: Tensor, h_dst: Tensor, WQ: Tensor, WK: Tensor) -> Tensor:
    """(h_src @ WQ) . (h_dst @ WK), unscaled"""
    return tsum(matmul(h_src, WQ) * matmul(h_dst, WK))


def init_attention(embeddings: Mapping[str, np.ndarray], relations: Mapping[str, Sequence[RelationType]],
                   WQ: Tensor, WK: Tensor) -> Dict[str, Tensor]:
    """Initial coefficients per target type: softmax over R(v) of type-embedding similarities

    `relations` maps each target type to R(v). Gradients reach WQ and WK.
    """
    if WQ.shape != WK.shape:
        raise DimensionError(f"WQ {WQ.shape} and WK {WK.shape} must share a shape")
    rows = {}
    for name, vector in embeddings.items():
        vector = np.asarray(vector, dtype=np.float64).reshape(1, -1)
        if vector.shape[1] != WQ.shape[0]:
            raise DimensionError(f"embedding of '{name}' has dim {vector.shape[1]}, projection expects {WQ.shape[0]}")
        rows[name] = as_tensor(vector)

    coefficients = {}
    for target, incoming in relations.items():
        if not incoming:
            raise ModelError(f"type '{target}' has no incoming relations")
        sims = []
        for rel in incoming:
            for type_name in (rel.src, rel.dst):
                if type_name not in rows:
                    raise ModelError(f"missing type embedding for '{type_name}'")
            sims.append(relation_similarity(rows[rel.src], rows[rel.dst], WQ, WK))
        coefficients[target] = softmax(reshape(stack(sims), (len(sims),)))
    return coefficients
