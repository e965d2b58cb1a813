"""
Task losses. Link and classification losses are sums over their pairs or
labeled nodes; the regression loss is a mean absolute error.
"""

import numpy as np

from htgnn.core.tensor import Tensor, add, getitem, log_sigmoid, log_softmax, mean, neg, sub, take_rows, tabs, tsum
from htgnn.errors import DimensionError, TrainingError


def pair_scores(h_src: Tensor, h_dst: Tensor, pairs: np.ndarray) -> Tensor:
    """Dot product of the source and destination rows of every pair"""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return tsum(take_rows(h_src, pairs[:, 0]) * take_rows(h_dst, pairs[:, 1]), axis=1)


def link_loss(h_src: Tensor, h_dst: Tensor, pos: np.ndarray, neg_pairs: np.ndarray) -> Tensor:
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
    neg_pairs = np.asarray(neg_pairs, dtype=np.int64).reshape(-1, 2)
    if pos.shape[0] == 0:
        raise TrainingError("link loss needs at least one positive pair")
    loss = neg(tsum(log_sigmoid(pair_scores(h_src, h_dst, pos))))
    if neg_pairs.shape[0]:
        loss = add(loss, neg(tsum(log_sigmoid(neg(pair_scores(h_src, h_dst, neg_pairs))))))
    return loss


def classify_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise DimensionError(f"classify loss: logits {logits.shape} vs labels {labels.shape}")
    if labels.shape[0] == 0:
        raise TrainingError("classify loss needs at least one labeled node")
    if labels.min() < 0 or labels.max() >= logits.shape[1] or not np.all(labels == np.round(labels)):
        raise TrainingError(f"class labels must be integers in [0, {logits.shape[1]})")
    labels = labels.astype(np.int64)
    picked = getitem(log_softmax(logits, axis=1), (np.arange(labels.shape[0]), labels))
    return neg(tsum(picked))


def regress_loss(pred: Tensor, y: np.ndarray) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape:
        raise DimensionError(f"regress loss: predictions {pred.shape} vs targets {y.shape}")
    if y.size == 0:
        raise TrainingError("regress loss needs at least one target")
    return mean(tabs(sub(pred, Tensor(y))))
