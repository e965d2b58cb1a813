"""Edge-level attention aggregation for one relation."""

import numpy as np

from htgnn.core.tensor import (Tensor, TensorLike, as_tensor, leaky_relu, matmul, mul, reshape, scatter_rows,
                               segment_softmax, take_rows)
from htgnn.errors import DimensionError


def gat_aggregate(edges: np.ndarray, h_src: TensorLike, h_dst: TensorLike, W: Tensor, a_src: Tensor,
                  a_dst: Tensor) -> Tensor:
    """Attention-weighted sum of transformed neighbors per destination

    score(u -> v) = leaky_relu(a_src . W h_u + a_dst . W h_v), softmax over the
    in-edges of v. Destinations without in-edges get a zero row.
    """
    h_src, h_dst = as_tensor(h_src), as_tensor(h_dst)
    edges = np.unique(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=0)
    if h_src.shape[1] != W.shape[0] or h_dst.shape[1] != W.shape[0]:
        raise DimensionError(f"gat inputs {h_src.shape}, {h_dst.shape} vs weight {W.shape}")
    n_dst = h_dst.shape[0]
    z_src = matmul(h_src, W)
    if edges.shape[0] == 0:
        return scatter_rows(take_rows(z_src, edges[:, 0]), edges[:, 1], n_dst)
    z_dst = matmul(h_dst, W)
    src, dst = edges[:, 0], edges[:, 1]
    k = W.shape[1]
    score_src = reshape(matmul(z_src, reshape(a_src, (k, 1))), (h_src.shape[0],))
    score_dst = reshape(matmul(z_dst, reshape(a_dst, (k, 1))), (n_dst,))
    logits = leaky_relu(take_rows(score_src, src) + take_rows(score_dst, dst))
    weights = segment_softmax(logits, dst, n_dst)
    messages = mul(reshape(weights, (edges.shape[0], 1)), take_rows(z_src, src))
    return scatter_rows(messages, dst, n_dst)
