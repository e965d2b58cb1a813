from typing import Dict, Sequence, Tuple

from htgnn.core.tensor import Tensor, matmul, mean, reshape, softmax, stack, tanh
from htgnn.errors import ModelError

Scorer = Tuple[Tensor, Tensor, Tensor]


def relation_score(h: Tensor, W: Tensor, b: Tensor, q: Tensor) -> Tensor:
    """mean over nodes of tanh(h W + b), dotted with q"""
    summary = mean(tanh(matmul(h, W) + b), axis=0)
    return reshape(matmul(reshape(summary, (1, W.shape[1])), reshape(q, (q.shape[0], 1))), ())


def static_scores(relation_outputs: Sequence[Tensor], scorer: Scorer) -> Tensor:
    W, b, q = scorer
    return stack([relation_score(h, W, b, q) for h in relation_outputs])


def static_relation_attention(relation_outputs: Sequence[Tensor], scorers: Dict[int, Scorer], position: int) -> Tensor:
    """Per-snapshot relation weights from the scorer owned by that window position; no state crosses time"""
    if position not in scorers:
        raise ModelError(f"no relation scorer for window position {position}")
    if not relation_outputs:
        raise ModelError("cannot score an empty relation set")
    return softmax(static_scores(relation_outputs, scorers[position]))
