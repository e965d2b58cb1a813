"""
Heterogeneous temporal graph: typed nodes, typed relations and an ordered
sequence of snapshots holding per-relation edges and per-type features.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from htgnn.errors import DatasetError

logger = logging.getLogger(__name__)

SELF_RELATION = "self"
RESERVED_CHARACTERS = (".", ":", "/")


def _check_name(kind: str, name: str):
    if not name or any(ch in name for ch in RESERVED_CHARACTERS):
        raise DatasetError(f"{kind} name '{name}' must be non-empty and free of {' '.join(RESERVED_CHARACTERS)}")


@dataclass(frozen=True)
class NodeType:
    name: str
    count: int
    feature_dim: int
    description: str = ""


@dataclass(frozen=True)
class RelationType:
    name: str
    src: str
    dst: str
    is_self: bool = False

    @property
    def key(self) -> str:
        return f"{self.src}:{self.name}:{self.dst}"


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Snapshot:
    """Edges per relation key as (m, 2) [src, dst] rows, features per type name"""

    def __init__(self, edges: Mapping[str, np.ndarray], features: Mapping[str, np.ndarray]):
        self.edges: Dict[str, np.ndarray] = {
            key: _readonly(np.array(value, dtype=np.int64).reshape(-1, 2)) for key, value in edges.items()
        }
        self.features: Dict[str, np.ndarray] = {
            name: _readonly(np.array(value, dtype=np.float64)) for name, value in features.items()
        }


class HTGraph:
    """Immutable heterogeneous temporal graph"""

    def __init__(self, node_types: Sequence[NodeType], relation_types: Sequence[RelationType],
                 snapshots: Sequence[Snapshot], strict: bool = False):
        self.node_types: List[NodeType] = list(node_types)
        self.relation_types: List[RelationType] = list(relation_types)
        self.snapshots: List[Snapshot] = list(snapshots)
        self._types = {nt.name: nt for nt in self.node_types}
        self._relations = {rel.key: rel for rel in self.relation_types}
        self.cache: Dict = {}
        self.validate(strict=strict)

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def type_names(self) -> List[str]:
        return [nt.name for nt in self.node_types]

    @property
    def relation_keys(self) -> List[str]:
        return [rel.key for rel in self.relation_types]

    def node_type(self, name: str) -> NodeType:
        if name not in self._types:
            raise DatasetError(f"Unknown node type '{name}'")
        return self._types[name]

    def relation(self, key_or_name: str) -> RelationType:
        """Look up by `src:name:dst` key, or by bare name when unambiguous"""
        if key_or_name in self._relations:
            return self._relations[key_or_name]
        matches = [rel for rel in self.relation_types if rel.name == key_or_name]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise DatasetError(f"Unknown relation '{key_or_name}'")
        raise DatasetError(f"Relation name '{key_or_name}' is ambiguous: {[m.key for m in matches]}")

    def relations_into(self, type_name: str) -> List[RelationType]:
        """R(v): relations whose destination is `type_name`, in declaration order"""
        return [rel for rel in self.relation_types if rel.dst == type_name]

    def edges(self, t: int, relation_key: str) -> np.ndarray:
        return self.snapshots[t].edges[relation_key]

    def features(self, t: int, type_name: str) -> np.ndarray:
        return self.snapshots[t].features[type_name]

    def num_edges(self, t: Optional[int] = None) -> int:
        snapshots = self.snapshots if t is None else [self.snapshots[t]]
        return sum(int(e.shape[0]) for s in snapshots for e in s.edges.values())

    def validate(self, strict: bool = False):
        """Check structural invariants; `strict` also enforces heterogeneity"""
        if len(self._types) != len(self.node_types):
            raise DatasetError("duplicate node type names")
        if len(self._relations) != len(self.relation_types):
            raise DatasetError("duplicate relation keys")
        if strict and len(self.node_types) + len(self.relation_types) < 2:
            raise DatasetError(
                f"graph is not heterogeneous: {len(self.node_types)} node types + "
                f"{len(self.relation_types)} relation types < 2"
            )
        for nt in self.node_types:
            _check_name("node type", nt.name)
            if nt.count < 1 or nt.feature_dim < 1:
                raise DatasetError(f"node type '{nt.name}' needs count >= 1 and feature_dim >= 1")
        for rel in self.relation_types:
            _check_name("relation", rel.name)
            if rel.src not in self._types or rel.dst not in self._types:
                raise DatasetError(f"relation '{rel.key}' references an unknown node type")
        for t, snapshot in enumerate(self.snapshots):
            for nt in self.node_types:
                features = snapshot.features.get(nt.name)
                if features is None:
                    raise DatasetError(f"snapshot {t} has no features for type '{nt.name}'")
                if features.shape != (nt.count, nt.feature_dim):
                    raise DatasetError(
                        f"snapshot {t} features for '{nt.name}' have shape {features.shape}, "
                        f"expected {(nt.count, nt.feature_dim)}"
                    )
                if not np.all(np.isfinite(features)):
                    raise DatasetError(f"snapshot {t} features for '{nt.name}' contain non-finite values")
            for rel in self.relation_types:
                edges = snapshot.edges.get(rel.key)
                if edges is None:
                    raise DatasetError(f"snapshot {t} has no edge list for relation '{rel.key}'")
                self._check_edges(t, rel, edges)
            unknown = set(snapshot.edges) - set(self._relations)
            if unknown:
                raise DatasetError(f"snapshot {t} has edges for undeclared relations {sorted(unknown)}")

    def _check_edges(self, t: int, rel: RelationType, edges: np.ndarray):
        if edges.shape[0] == 0:
            return
        for column, type_name, role in ((0, rel.src, "src"), (1, rel.dst, "dst")):
            limit = self._types[type_name].count
            bad = (edges[:, column] < 0) | (edges[:, column] >= limit)
            if bad.any():
                row = edges[int(np.argmax(bad))]
                raise DatasetError(
                    f"snapshot {t}, relation '{rel.key}': edge ({row[0]}, {row[1]}) has {role} index "
                    f"out of range for type '{type_name}' with {limit} nodes"
                )

    def with_relations(self, relation_types: Sequence[RelationType], snapshots: Sequence[Snapshot]) -> "HTGraph":
        return HTGraph(self.node_types, relation_types, snapshots)

    def equals(self, other: "HTGraph") -> bool:
        if self.node_types != other.node_types or self.relation_types != other.relation_types or self.T != other.T:
            return False
        for mine, theirs in zip(self.snapshots, other.snapshots):
            for key in self.relation_keys:
                if not np.array_equal(_sorted_edges(mine.edges[key]), _sorted_edges(theirs.edges[key])):
                    return False
            for name in self.type_names:
                if not np.array_equal(mine.features[name], theirs.features[name]):
                    return False
        return True

    def summary(self) -> Dict:
        return {
            "node_types": {nt.name: nt.count for nt in self.node_types},
            "relations": self.relation_keys,
            "T": self.T,
            "edges": self.num_edges(),
        }


def _sorted_edges(edges: np.ndarray) -> np.ndarray:
    if edges.shape[0] == 0:
        return edges
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def self_relation(type_name: str) -> RelationType:
    return RelationType(SELF_RELATION, type_name, type_name, is_self=True)


def add_self_relation(graph: HTGraph) -> HTGraph:
    """Append an identity relation per node type; a no-op for types that already have one"""
    missing = [nt for nt in graph.node_types if self_relation(nt.name).key not in graph.relation_keys]
    if not missing:
        return graph
    relations = graph.relation_types + [self_relation(nt.name) for nt in missing]
    snapshots = []
    for snapshot in graph.snapshots:
        edges = dict(snapshot.edges)
        for nt in missing:
            identity = np.arange(nt.count, dtype=np.int64)
            edges[self_relation(nt.name).key] = np.stack([identity, identity], axis=1)
        snapshots.append(Snapshot(edges, snapshot.features))
    logger.info(f"Added self relations for {[nt.name for nt in missing]}")
    return graph.with_relations(relations, snapshots)


def without_self_relations(graph: HTGraph) -> HTGraph:
    relations = [rel for rel in graph.relation_types if not rel.is_self]
    if len(relations) == len(graph.relation_types):
        return graph
    keys = {rel.key for rel in relations}
    snapshots = [
        Snapshot({k: v for k, v in s.edges.items() if k in keys}, s.features) for s in graph.snapshots
    ]
    return graph.with_relations(relations, snapshots)


def build_graph(node_types: Iterable[NodeType], relation_types: Iterable[RelationType],
                edges: Sequence[Mapping[str, np.ndarray]], features: Sequence[Mapping[str, np.ndarray]],
                strict: bool = False) -> HTGraph:
    """Assemble a graph from per-snapshot edge and feature mappings"""
    if len(edges) != len(features):
        raise DatasetError(f"got {len(edges)} edge snapshots but {len(features)} feature snapshots")
    snapshots = [Snapshot(e, f) for e, f in zip(edges, features)]
    return HTGraph(list(node_types), list(relation_types), snapshots, strict=strict)
