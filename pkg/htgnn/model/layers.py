"""Building blocks of the dynamic-attention model, each a pure function of tensors."""

from typing import Sequence, Tuple

from htgnn.core.recurrent import GRUWeights, gru_cell
from htgnn.core.sparse import SparseMatrix, spmm
from htgnn.core.tensor import Tensor, TensorLike, as_tensor, elu, getitem, matmul, mean, softmax, stack
from htgnn.errors import DimensionError, ModelError


def project_features(x: TensorLike, W: Tensor, b: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"feature projection mismatch: features {x.shape} vs weight {W.shape}")
    return matmul(x, W) + b


def aggregate_relation(adj: SparseMatrix, h_src: TensorLike) -> Tensor:
    """ELU of the normalized neighbor sum; no learnable parameters"""
    return elu(spmm(adj, h_src))


def dynamic_attention_step(h: TensorLike, e_prev: TensorLike, weights: GRUWeights) -> Tensor:
    return gru_cell(h, e_prev, weights)


def fuse_scores(scores: Tensor, relation_outputs: Sequence[Tensor]) -> Tuple[Tensor, Tensor]:
    """Softmax the per-relation scores and take the weighted sum of relation outputs"""
    if not relation_outputs:
        raise ModelError("cannot fuse an empty relation set")
    if scores.shape != (len(relation_outputs),):
        raise DimensionError(f"fusion scores {scores.shape} vs {len(relation_outputs)} relation outputs")
    alpha = softmax(scores)
    return alpha, weighted_sum(alpha, relation_outputs)


def weighted_sum(alpha: Tensor, relation_outputs: Sequence[Tensor]) -> Tensor:
    fused = getitem(alpha, 0) * relation_outputs[0]
    for i in range(1, len(relation_outputs)):
        fused = fused + getitem(alpha, i) * relation_outputs[i]
    return fused


def fuse_relations(hidden: Sequence[Tensor], relation_outputs: Sequence[Tensor]) -> Tuple[Tensor, Tensor]:
    """alpha = softmax of each hidden state's mean over nodes and heads"""
    if not hidden:
        raise ModelError("cannot fuse an empty relation set")
    if len(hidden) != len(relation_outputs):
        raise DimensionError(f"{len(hidden)} attention states vs {len(relation_outputs)} relation outputs")
    return fuse_scores(stack([mean(e) for e in hidden]), relation_outputs)


def temporal_project(z: TensorLike, W: Tensor, b: Tensor) -> Tensor:
    """(n, d, T) x (T, horizon) + b -> (n, d, horizon)"""
    z = as_tensor(z)
    if z.ndim != 3 or z.shape[2] != W.shape[0]:
        raise DimensionError(f"temporal projection mismatch: sequence {z.shape} vs weight {W.shape}")
    return matmul(z, W) + b


def mlp_head(h: TensorLike, W1: Tensor, b1: Tensor, W2: Tensor, b2: Tensor) -> Tensor:
    h = as_tensor(h)
    if h.ndim != 2 or h.shape[1] != W1.shape[0]:
        raise DimensionError(f"head input {h.shape} vs first layer {W1.shape}")
    return matmul(elu(matmul(h, W1) + b1), W2) + b2
