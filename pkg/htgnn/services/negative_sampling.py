import logging
from typing import Optional, Sequence

import numpy as np

from htgnn.data.graph import HTGraph
from htgnn.data.tasks import TaskSpec
from htgnn.errors import TrainingError

logger = logging.getLogger(__name__)

# Below this fraction of free pairs the candidates are enumerated instead of drawn
DENSE_FRACTION = 0.05
ENUMERATE_LIMIT = 4_000_000


def _codes(pairs: np.ndarray, n_dst: int) -> np.ndarray:
    return pairs[:, 0].astype(np.int64) * n_dst + pairs[:, 1].astype(np.int64)


def draw_negatives(positives: np.ndarray, n_src: int, n_dst: int, rng: np.random.Generator,
                   exclude_self: bool = False, count: Optional[int] = None) -> np.ndarray:
    """Uniformly drawn (src, dst) pairs that are not positives, without repeats"""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    total = n_src * n_dst
    taken = np.unique(_codes(positives, n_dst))
    if exclude_self:
        taken = taken[taken // n_dst != taken % n_dst]
        blocked = taken.shape[0] + min(n_src, n_dst)
    else:
        blocked = taken.shape[0]
    space = total - blocked
    if space <= 0:
        raise TrainingError(f"negative space exhausted: all {total} pairs of a {n_src} x {n_dst} block are positive")
    wanted = positives.shape[0] if count is None else count
    if wanted > space:
        logger.warning(f"Only {space} free pairs in a {n_src} x {n_dst} block for {wanted} requested negatives; "
                       f"drawing {space}")
    count = min(wanted, space)
    if count <= 0:
        return np.zeros((0, 2), dtype=np.int64)

    if space < DENSE_FRACTION * total and total <= ENUMERATE_LIMIT:
        candidates = np.setdiff1d(np.arange(total, dtype=np.int64), taken, assume_unique=True)
        if exclude_self:
            candidates = candidates[candidates // n_dst != candidates % n_dst]
        chosen = rng.choice(candidates, size=count, replace=False)
    else:
        chosen = np.zeros(0, dtype=np.int64)
        while chosen.shape[0] < count:
            needed = count - chosen.shape[0]
            draw = rng.integers(0, total, size=max(2 * needed, 16), dtype=np.int64)
            keep = ~np.isin(draw, taken) & ~np.isin(draw, chosen)
            if exclude_self:
                keep &= draw // n_dst != draw % n_dst
            draw = draw[keep]
            _, first = np.unique(draw, return_index=True)
            chosen = np.concatenate([chosen, draw[np.sort(first)][:needed]])
    return np.stack([chosen // n_dst, chosen % n_dst], axis=1)


def sample_negatives(graph: HTGraph, task: TaskSpec, positives: np.ndarray, t: int, seed: int,
                     epoch: Optional[int] = None, step: int = 0) -> np.ndarray:
    """Negatives for the positives of snapshot t, one per positive

    Training draws (epoch given) use the key [seed, 0, epoch, t, step];
    evaluation draws use [seed, 1, t, step] so they repeat across epochs.
    """
    key: Sequence[int] = [seed, 1, t, step] if epoch is None else [seed, 0, epoch, t, step]
    rng = np.random.default_rng(key)
    n_src = graph.node_type(task.src_type).count
    n_dst = graph.node_type(task.dst_type).count
    return draw_negatives(positives, n_src, n_dst, rng, exclude_self=task.same_type)
