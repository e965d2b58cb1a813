"""
Two-stage baseline: per-snapshot relation attention with scorers owned by each
window position, followed by causal multi-head dot-product self-attention over
the window. Its temporal cost grows with the square of the window and its
parameter count grows with the window length.

No state crosses snapshots in the spatial stage, so every snapshot of the
window is encoded in one batched pass: adjacencies are laid out block-diagonally
over time and each position's scorer is applied to its own slice.
"""

import logging
from typing import Dict, List

import numpy as np

from htgnn.ablation.variants import VariantConfig
from htgnn.core.sparse import SparseMatrix, spmm
from htgnn.core.tensor import (Tensor, elu, getitem, matmul, mean, reshape, softmax, stack, swapaxes, tanh,
                               tsum)
from htgnn.data.adjacency import relation_adjacency
from htgnn.data.graph import HTGraph, RelationType
from htgnn.errors import DimensionError, ModelError
from htgnn.model.htgnn_model import ForwardResult, HTGNN
from htgnn.model.layers import aggregate_relation, project_features

logger = logging.getLogger(__name__)

MASK_VALUE = -1e30


def causal_mask(length: int) -> np.ndarray:
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


def temporal_self_attention(sequence: Tensor, Wq: Tensor, Wk: Tensor, Wv: Tensor, heads: int = 1) -> Tensor:
    """(n, T, d) -> (n, T, d_v); step i attends to steps <= i in every head"""
    n, length, _ = sequence.shape
    d_k, d_v = Wq.shape[1], Wv.shape[1]
    if heads < 1 or d_k % heads or d_v % heads:
        raise DimensionError(f"{heads} heads do not divide query width {d_k} and value width {d_v}")

    def split(x: Tensor, width: int) -> Tensor:
        return swapaxes(reshape(x, (n, length, heads, width // heads)), 1, 2)

    queries = split(matmul(sequence, Wq), d_k)
    keys = split(matmul(sequence, Wk), d_k)
    values = split(matmul(sequence, Wv), d_v)
    logits = matmul(queries, swapaxes(keys, 2, 3)) * (1.0 / np.sqrt(d_k // heads)) + causal_mask(length)
    attended = matmul(softmax(logits, axis=-1), values)
    return reshape(swapaxes(attended, 1, 2), (n, length, d_v))


class DecoupledBaseline(HTGNN):
    kind = "decoupled"

    def __init__(self, *args, **kwargs):
        variant = kwargs.pop("variant", None) or VariantConfig()
        kwargs["variant"] = variant.model_copy(update={"attention": "projected"})
        super().__init__(*args, **kwargs)

    def _build_extra(self, rng: np.random.Generator):
        d = self.hidden_dim
        if d % self.heads:
            raise ModelError(f"temporal attention needs heads ({self.heads}) to divide hidden_dim ({d})")
        for name in ("Wq", "Wk", "Wv"):
            self._add_uniform(f"tattn.{name}", (d, d), d, rng)

    # Spatial stage over the whole window

    def _window_adjacency(self, graph: HTGraph, window: List[int], rel: RelationType) -> SparseMatrix:
        """Block-diagonal adjacency whose block p is the relation at window[p]"""
        cache_key = ("window_adjacency", self.normalization, tuple(window), rel.key)
        if cache_key not in graph.cache:
            n_dst, n_src = graph.node_type(rel.dst).count, graph.node_type(rel.src).count
            blocks = [relation_adjacency(graph, t, rel, self.normalization) for t in window]
            graph.cache[cache_key] = SparseMatrix(
                len(window) * n_dst, len(window) * n_src,
                np.concatenate([adj.row_index + p * n_dst for p, adj in enumerate(blocks)]),
                np.concatenate([adj.col_index + p * n_src for p, adj in enumerate(blocks)]),
                np.concatenate([adj.weights for adj in blocks]),
            )
        return graph.cache[cache_key]

    def _window_aggregate(self, layer: int, rel: RelationType, graph: HTGraph, window: List[int],
                          inputs: Dict[str, Tensor]) -> Tensor:
        kind = self.variant.aggregation
        if kind == "none":
            return inputs[rel.dst]
        if kind == "gat":
            return stack([self._aggregate(layer, rel, graph, t, {v: getitem(x, p) for v, x in inputs.items()})
                          for p, t in enumerate(window)])
        x = inputs[rel.src]
        flat = reshape(x, (x.shape[0] * x.shape[1], x.shape[2]))
        adj = self._window_adjacency(graph, window, rel)
        if kind == "gcn":
            out = elu(spmm(adj, matmul(flat, self.params[f"gcn.{layer}.{rel.key}.W"])))
        else:
            out = aggregate_relation(adj, flat)
        return reshape(out, (len(window), graph.node_type(rel.dst).count, out.shape[1]))

    def _window_scores(self, layer: int, relation_outputs: List[Tensor]) -> Tensor:
        """(window, |R(v)|) scores, position p scored by static.<layer>.<p>"""
        d, length = self.hidden_dim, self.window
        W = stack([self.params[f"static.{layer}.{p}.W"] for p in range(length)])
        b = reshape(stack([self.params[f"static.{layer}.{p}.b"] for p in range(length)]), (length, 1, d))
        q = reshape(stack([self.params[f"static.{layer}.{p}.q"] for p in range(length)]), (length, d, 1))
        scores = []
        for h in relation_outputs:
            summary = reshape(mean(tanh(matmul(h, W) + b), axis=1), (length, 1, d))
            scores.append(reshape(matmul(summary, q), (length,)))
        return stack(scores, axis=1)

    def _window_layer(self, layer: int, graph: HTGraph, window: List[int], inputs: Dict[str, Tensor],
                      result: ForwardResult, keep: bool) -> Dict[str, Tensor]:
        outputs = {}
        for v, incoming in self.incoming.items():
            relation_outputs = [self._window_aggregate(layer, rel, graph, window, inputs) for rel in incoming]
            scores = self._window_scores(layer, relation_outputs)
            alpha = softmax(scores, axis=1)
            weights = reshape(swapaxes(alpha, 0, 1), (len(incoming), len(window), 1, 1))
            outputs[v] = tsum(stack(relation_outputs) * weights, axis=0)
            for p, t in enumerate(window):
                result.attention.add(layer, v, t, incoming, Tensor(alpha.data[p]), Tensor(scores.data[p]))
                if keep:
                    result.fused[(layer, t, v)] = outputs[v].data[p].copy()
                    for rel, h in zip(incoming, relation_outputs):
                        result.relation_outputs[(layer, t, rel.key)] = h.data[p].copy()
        return outputs

    def _encode(self, graph: HTGraph, window: List[int], initial, result: ForwardResult,
                keep: bool) -> Dict[str, Tensor]:
        inputs = {}
        for nt in self.node_types:
            features = np.concatenate([graph.features(t, nt.name) for t in window], axis=0)
            projected = project_features(features, self.params[f"proj.{nt.name}.W"],
                                         self.params[f"proj.{nt.name}.b"])
            inputs[nt.name] = reshape(projected, (len(window), nt.count, self.hidden_dim))
        for layer in range(self.layers):
            inputs = self._window_layer(layer, graph, window, inputs, result, keep)

        sequences = {}
        for v in self.output_types:
            attended = temporal_self_attention(swapaxes(inputs[v], 0, 1), self.params["tattn.Wq"],
                                               self.params["tattn.Wk"], self.params["tattn.Wv"], heads=self.heads)
            sequences[v] = swapaxes(attended, 1, 2)
        return sequences
