"""
Dynamic relation-attention model over heterogeneous temporal graphs.

Per snapshot of the window each relation aggregates its neighbors, a
relation-specific recurrent cell advances that relation's attention state,
and the mean of every state is softmaxed over the relations entering a node
type to weight the fusion. Layers stack on the fused per-snapshot outputs, a
linear map over the window produces the forecast steps, and a two-layer MLP
turns them into task outputs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from htgnn.ablation.gat import gat_aggregate
from htgnn.ablation.static_attention import static_relation_attention
from htgnn.ablation.variants import (VariantConfig, causal_self_attention_step, gated_attention_step, mean_row,
                                     variant_init)
from htgnn.core.recurrent import GRUWeights, LSTMWeights, lstm_cell, uniform_init
from htgnn.core.sparse import spmm
from htgnn.core.tensor import Tensor, broadcast_to, elu, getitem, matmul, mean, no_grad, reshape, stack, zeros
from htgnn.data.adjacency import NORMALIZATIONS, relation_adjacency
from htgnn.data.graph import HTGraph, RelationType, add_self_relation
from htgnn.data.tasks import TaskSpec
from htgnn.errors import DimensionError, ModelError
from htgnn.llm.attention_init import init_attention
from htgnn.model.layers import (aggregate_relation, dynamic_attention_step, fuse_scores, mlp_head, project_features,
                                temporal_project, weighted_sum)
from htgnn.model.params import ParamStore

logger = logging.getLogger(__name__)

StateKey = Tuple[str, str]


@dataclass
class AttentionRecord:
    layer: int
    type_name: str
    snapshot: int
    relation: str
    alpha: float
    score: Optional[float]


@dataclass
class AttentionTrace:
    """Relation weights (and their pre-softmax scores) per layer, type and snapshot"""

    records: List[AttentionRecord] = field(default_factory=list)

    def add(self, layer: int, type_name: str, snapshot: int, relations: List[RelationType], alpha: Tensor,
            scores: Optional[Tensor]):
        for i, rel in enumerate(relations):
            score = float(scores.data[i]) if scores is not None else None
            self.records.append(AttentionRecord(layer, type_name, snapshot, rel.key, float(alpha.data[i]), score))

    def alphas(self, layer: int, type_name: str) -> pd.DataFrame:
        """Snapshot x relation table of weights"""
        frame = self.to_frame()
        frame = frame[(frame["layer"] == layer) & (frame["type"] == type_name)]
        return frame.pivot(index="snapshot", columns="relation", values="alpha")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.layer, r.type_name, r.snapshot, r.relation, r.alpha, r.score) for r in self.records],
            columns=["layer", "type", "snapshot", "relation", "alpha", "score"],
        )


@dataclass
class ForwardResult:
    target: int
    predictions: Dict[str, List[Tensor]]
    attention: AttentionTrace
    relation_outputs: Dict[Tuple[int, int, str], np.ndarray] = field(default_factory=dict)
    fused: Dict[Tuple[int, int, str], np.ndarray] = field(default_factory=dict)


class HTGNN:
    """Primary model; parameters shared across snapshots, one attention cell per (layer, relation)"""

    kind = "htgnn"

    def __init__(self, graph: HTGraph, task: TaskSpec, hidden_dim: int = 32, heads: int = 1, layers: int = 2,
                 window: int = 4, horizon: int = 1, variant: Optional[VariantConfig] = None,
                 type_embeddings: Optional[Mapping[str, np.ndarray]] = None, sim_dim: Optional[int] = None,
                 normalization: str = "auto", seed: int = 0):
        if min(hidden_dim, heads, layers, window, horizon) < 1:
            raise ModelError("hidden_dim, heads, layers, window and horizon must all be >= 1")
        if normalization not in NORMALIZATIONS:
            raise ModelError(f"Unknown normalization '{normalization}', expected one of {NORMALIZATIONS}")
        schema = add_self_relation(graph)
        self.node_types = list(schema.node_types)
        self.relations = list(schema.relation_types)
        self.incoming: Dict[str, List[RelationType]] = {nt.name: schema.relations_into(nt.name)
                                                        for nt in self.node_types}
        self.task = task
        task.validate(schema)
        self.hidden_dim = hidden_dim
        self.heads = heads
        self.layers = layers
        self.window = window
        self.horizon = horizon
        self.variant = variant or VariantConfig()
        self.normalization = normalization
        self.seed = seed
        self.sim_dim = sim_dim or hidden_dim
        self.type_embeddings = self._check_embeddings(type_embeddings)
        self.output_dim = {"link": hidden_dim, "classify": task.num_classes, "regress": 1}[task.kind]

        self.params = ParamStore()
        self.cells: Dict[Tuple[int, str], object] = {}
        rng = np.random.default_rng(seed)
        self._build(rng)
        logger.info(f"Built {self.kind} ({self.variant.label}) with {self.params.count()} parameters")

    # Construction

    def _check_embeddings(self, embeddings: Optional[Mapping[str, np.ndarray]]) -> Optional[Dict[str, np.ndarray]]:
        if not self._needs_llm():
            return None
        if embeddings is None:
            raise ModelError("llm initialization needs type embeddings for every node type")
        missing = [nt.name for nt in self.node_types if nt.name not in embeddings]
        if missing:
            raise ModelError(f"missing type embeddings for {missing}")
        dims = {np.asarray(embeddings[nt.name]).size for nt in self.node_types}
        if len(dims) != 1:
            raise DimensionError(f"type embeddings have inconsistent dims {sorted(dims)}")
        return {nt.name: np.asarray(embeddings[nt.name], dtype=np.float64).reshape(-1) for nt in self.node_types}

    def _needs_llm(self) -> bool:
        return self.variant.init == "llm" and self.variant.uses_initial_state

    def _add_uniform(self, name: str, shape, fan_in: int, rng: np.random.Generator) -> Tensor:
        return self.params.add(name, uniform_init(rng, shape, fan_in))

    def _build(self, rng: np.random.Generator):
        d = self.hidden_dim
        for nt in self.node_types:
            self._add_uniform(f"proj.{nt.name}.W", (nt.feature_dim, d), nt.feature_dim, rng)
            self._add_uniform(f"proj.{nt.name}.b", (d,), nt.feature_dim, rng)

        for layer in range(self.layers):
            for rel in self.relations:
                self._build_attention_cell(layer, rel, rng)
                self._build_aggregation(layer, rel, rng)
            if self.variant.attention == "projected":
                for position in range(self.window):
                    prefix = f"static.{layer}.{position}"
                    self._add_uniform(f"{prefix}.W", (d, d), d, rng)
                    self._add_uniform(f"{prefix}.b", (d,), d, rng)
                    self._add_uniform(f"{prefix}.q", (d,), d, rng)

        if self._needs_llm():
            d_llm = next(iter(self.type_embeddings.values())).size
            self._add_uniform("llm.WQ", (d_llm, self.sim_dim), d_llm, rng)
            self._add_uniform("llm.WK", (d_llm, self.sim_dim), d_llm, rng)

        self.params.add("temporal.W", np.full((self.window, self.horizon), 1.0 / self.window))
        self.params.add("temporal.b", np.zeros(self.horizon))
        self._build_extra(rng)

        self._add_uniform("head.1.W", (d, d), d, rng)
        self._add_uniform("head.1.b", (d,), d, rng)
        self._add_uniform("head.2.W", (d, self.output_dim), d, rng)
        self._add_uniform("head.2.b", (self.output_dim,), d, rng)

    def _build_extra(self, rng: np.random.Generator):
        """Hook for subclasses adding parameters before the head"""

    def _register(self, prefix: str, weights):
        for name, tensor in weights.named(prefix).items():
            self.params.add(name, tensor.data)
        return type(weights).from_named(self.params, prefix)

    def _build_attention_cell(self, layer: int, rel: RelationType, rng: np.random.Generator):
        d, k = self.hidden_dim, self.heads
        kind = self.variant.attention
        if kind == "dynamic":
            self.cells[(layer, rel.key)] = self._register(f"gru.{layer}.{rel.key}", GRUWeights.init(d, k, rng))
        elif kind == "lstm":
            self.cells[(layer, rel.key)] = self._register(f"lstm.{layer}.{rel.key}", LSTMWeights.init(d, k, rng))
        elif kind == "gated":
            prefix = f"gate.{layer}.{rel.key}"
            self.cells[(layer, rel.key)] = tuple(
                self._add_uniform(f"{prefix}.{name}", shape, d, rng)
                for name, shape in (("Wg", (d, k)), ("bg", (k,)), ("Ws", (d, k)), ("bs", (k,)))
            )
        elif kind == "self":
            prefix = f"selfatt.{layer}.{rel.key}"
            self.cells[(layer, rel.key)] = tuple(
                self._add_uniform(f"{prefix}.{name}", shape, d, rng)
                for name, shape in (("Wq", (d, d)), ("Wk", (d, d)), ("Ws", (d, k)), ("bs", (k,)))
            )

    def _build_aggregation(self, layer: int, rel: RelationType, rng: np.random.Generator):
        d = self.hidden_dim
        if self.variant.aggregation == "gcn":
            self._add_uniform(f"gcn.{layer}.{rel.key}.W", (d, d), d, rng)
        elif self.variant.aggregation == "gat":
            self._add_uniform(f"gat.{layer}.{rel.key}.W", (d, d), d, rng)
            self._add_uniform(f"gat.{layer}.{rel.key}.a_src", (d,), d, rng)
            self._add_uniform(f"gat.{layer}.{rel.key}.a_dst", (d,), d, rng)

    # Accessors

    @property
    def type_names(self) -> List[str]:
        return [nt.name for nt in self.node_types]

    @property
    def output_types(self) -> List[str]:
        return self.task.output_types

    def count_parameters(self, prefix: Optional[str] = None) -> int:
        return self.params.count(prefix)

    def prepare(self, graph: HTGraph) -> HTGraph:
        graph = add_self_relation(graph)
        if graph.relation_keys != [rel.key for rel in self.relations] or graph.type_names != self.type_names:
            raise ModelError("graph schema does not match the schema the model was built for")
        return graph

    # Initial attention state

    def initial_coefficients(self) -> Dict[str, Tensor]:
        def from_llm():
            return init_attention(self.type_embeddings, self.incoming, self.params["llm.WQ"], self.params["llm.WK"])

        return variant_init(self.variant.init, self.incoming, seed=self.seed,
                            llm=from_llm if self._needs_llm() else None)

    def _initial_states(self, layer: int, graph: HTGraph, coefficients: Dict[str, Tensor],
                        initial: Optional[Mapping[Tuple[int, str, str], Tensor]]) -> Dict[StateKey, object]:
        states = {}
        for v, incoming in self.incoming.items():
            n_v = graph.node_type(v).count
            for i, rel in enumerate(incoming):
                if initial is not None and (layer, v, rel.key) in initial:
                    e0 = broadcast_to(initial[(layer, v, rel.key)], (n_v, self.heads))
                else:
                    e0 = broadcast_to(reshape(getitem(coefficients[v], i), (1, 1)), (n_v, self.heads))
                if self.variant.attention == "lstm":
                    states[(v, rel.key)] = (e0, zeros((n_v, self.heads)))
                else:
                    states[(v, rel.key)] = e0
        return states

    # Forward pass

    def _aggregate(self, layer: int, rel: RelationType, graph: HTGraph, t: int, inputs: Dict[str, Tensor]) -> Tensor:
        kind = self.variant.aggregation
        if kind == "none":
            return inputs[rel.dst]
        if kind == "gat":
            prefix = f"gat.{layer}.{rel.key}"
            return elu(gat_aggregate(graph.edges(t, rel.key), inputs[rel.src], inputs[rel.dst],
                                     self.params[f"{prefix}.W"], self.params[f"{prefix}.a_src"],
                                     self.params[f"{prefix}.a_dst"]))
        adj = relation_adjacency(graph, t, rel, self.normalization)
        if kind == "gcn":
            return elu(spmm(adj, matmul(inputs[rel.src], self.params[f"gcn.{layer}.{rel.key}.W"])))
        return aggregate_relation(adj, inputs[rel.src])

    def _advance(self, layer: int, v: str, rel: RelationType, h: Tensor, states: Dict[StateKey, object],
                 history: Dict[StateKey, List[Tensor]]) -> Tensor:
        """Advance one attention chain and return its scalar score"""
        key = (v, rel.key)
        cell = self.cells[(layer, rel.key)]
        kind = self.variant.attention
        if kind == "dynamic":
            states[key] = dynamic_attention_step(h, states[key], cell)
            return mean(states[key])
        if kind == "lstm":
            hidden, memory = lstm_cell(h, *states[key], cell)
            states[key] = (hidden, memory)
            return mean(hidden)
        if kind == "gated":
            states[key] = gated_attention_step(h, states[key], *cell)
            return mean(states[key])
        history.setdefault(key, []).append(mean_row(h))
        return mean(causal_self_attention_step(history[key], *cell))

    def _scorers(self, layer: int) -> Dict[int, Tuple[Tensor, Tensor, Tensor]]:
        return {
            position: tuple(self.params[f"static.{layer}.{position}.{name}"] for name in ("W", "b", "q"))
            for position in range(self.window)
        }

    def _spatial_layer(self, layer: int, graph: HTGraph, window: List[int], inputs: Dict[int, Dict[str, Tensor]],
                       coefficients: Dict[str, Tensor], initial, result: ForwardResult,
                       keep: bool) -> Dict[int, Dict[str, Tensor]]:
        projected = self.variant.attention == "projected"
        seeded = self.variant.uses_initial_state
        states = self._initial_states(layer, graph, coefficients, initial) if seeded else {}
        scorers = self._scorers(layer) if projected else None
        history: Dict[StateKey, List[Tensor]] = {}
        outputs = {}
        for position, t in enumerate(window):
            outputs[t] = {}
            for v, incoming in self.incoming.items():
                relation_outputs = []
                scores = []
                for rel in incoming:
                    h = self._aggregate(layer, rel, graph, t, inputs[t])
                    relation_outputs.append(h)
                    if keep:
                        result.relation_outputs[(layer, t, rel.key)] = h.data.copy()
                    if not projected:
                        scores.append(self._advance(layer, v, rel, h, states, history))
                if projected:
                    alpha = static_relation_attention(relation_outputs, scorers, position)
                    fused = weighted_sum(alpha, relation_outputs)
                    score_vector = None
                else:
                    score_vector = stack(scores)
                    alpha, fused = fuse_scores(score_vector, relation_outputs)
                result.attention.add(layer, v, t, incoming, alpha, score_vector)
                outputs[t][v] = fused
                if keep:
                    result.fused[(layer, t, v)] = fused.data.copy()
        return outputs

    def _encode(self, graph: HTGraph, window: List[int], initial, result: ForwardResult,
                keep: bool) -> Dict[str, Tensor]:
        """(n, d, window) representation of every output type"""
        coefficients = self.initial_coefficients() if self.variant.uses_initial_state else {}
        inputs = {
            t: {nt.name: project_features(graph.features(t, nt.name), self.params[f"proj.{nt.name}.W"],
                                          self.params[f"proj.{nt.name}.b"]) for nt in self.node_types}
            for t in window
        }
        for layer in range(self.layers):
            inputs = self._spatial_layer(layer, graph, window, inputs, coefficients, initial, result, keep)
        return {v: stack([inputs[t][v] for t in window], axis=2) for v in self.output_types}

    def forward(self, graph: HTGraph, target: int, initial: Optional[Mapping[Tuple[int, str, str], Tensor]] = None,
                keep_intermediates: bool = False) -> ForwardResult:
        """Predict snapshots target .. target+horizon-1 from the window before target"""
        graph = self.prepare(graph)
        if target - self.window < 0 or target > graph.T:
            raise ModelError(f"target {target} needs snapshots {target - self.window}..{target - 1} "
                             f"inside a graph with T={graph.T}")
        window = list(range(target - self.window, target))
        result = ForwardResult(target=target, predictions={}, attention=AttentionTrace())
        sequences = self._encode(graph, window, initial, result, keep_intermediates)

        for v in self.output_types:
            z = temporal_project(sequences[v], self.params["temporal.W"], self.params["temporal.b"])
            steps = []
            for s in range(self.horizon):
                h = getitem(z, (slice(None), slice(None), s))
                out = mlp_head(h, self.params["head.1.W"], self.params["head.1.b"],
                               self.params["head.2.W"], self.params["head.2.b"])
                if self.task.kind == "regress":
                    out = reshape(out, (out.shape[0],))
                steps.append(out)
            result.predictions[v] = steps
        return result

    def predict(self, graph: HTGraph, target: int) -> ForwardResult:
        with no_grad():
            return self.forward(graph, target)
