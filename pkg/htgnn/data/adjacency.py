import logging

import numpy as np

from htgnn.core.sparse import SparseMatrix
from htgnn.data.graph import HTGraph, RelationType
from htgnn.errors import DatasetError

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("auto", "row", "sym")


def normalize_adjacency(edges, n_dst: int, n_src: int, kind: str = "row") -> SparseMatrix:
    """Normalized [dst, src] adjacency from (src, dst) edge pairs

    row: weight(i, j) = 1 / in_degree(i)
    sym: weight(i, j) = 1 / sqrt(in_degree(i) * out_degree(j))
    Duplicate pairs count once; destinations without edges keep an all-zero row.
    """
    if kind not in ("row", "sym"):
        raise ValueError(f"Unknown normalization '{kind}', expected 'row' or 'sym'")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        return SparseMatrix(n_dst, n_src)
    src, dst = edges[:, 0], edges[:, 1]
    if src.min() < 0 or src.max() >= n_src or dst.min() < 0 or dst.max() >= n_dst:
        raise DatasetError(f"edge index out of range for a {n_dst}x{n_src} (dst x src) adjacency")
    edges = np.unique(edges, axis=0)
    src, dst = edges[:, 0], edges[:, 1]
    in_degree = np.bincount(dst, minlength=n_dst).astype(np.float64)
    if kind == "row":
        weights = 1.0 / in_degree[dst]
    else:
        out_degree = np.bincount(src, minlength=n_src).astype(np.float64)
        weights = 1.0 / np.sqrt(in_degree[dst] * out_degree[src])
    return SparseMatrix(n_dst, n_src, dst, src, weights)


def resolve_normalization(relation: RelationType, normalization: str) -> str:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"Unknown normalization '{normalization}', expected one of {NORMALIZATIONS}")
    if normalization == "auto":
        return "sym" if relation.src == relation.dst else "row"
    return normalization


def relation_adjacency(graph: HTGraph, t: int, relation: RelationType, normalization: str = "auto") -> SparseMatrix:
    """Normalized adjacency of one relation at snapshot t, memoized on the graph"""
    kind = resolve_normalization(relation, normalization)
    cache_key = ("adjacency", kind, t, relation.key)
    if cache_key not in graph.cache:
        graph.cache[cache_key] = normalize_adjacency(
            graph.edges(t, relation.key),
            graph.node_type(relation.dst).count,
            graph.node_type(relation.src).count,
            kind,
        )
    return graph.cache[cache_key]
