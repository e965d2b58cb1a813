import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from htgnn.data.graph import HTGraph
from htgnn.errors import DatasetError

logger = logging.getLogger(__name__)

TASK_KINDS = ("link", "classify", "regress")


@dataclass
class TaskSpec:
    """What the model predicts at each future snapshot

    link: positive (src, dst) pairs between src_type and dst_type, taken from
    `relation` when set, otherwise from `pairs`.
    classify / regress: `nodes` of target_type with `values` (class ids or reals).
    """

    kind: str
    src_type: Optional[str] = None
    dst_type: Optional[str] = None
    relation: Optional[str] = None
    target_type: Optional[str] = None
    num_classes: Optional[int] = None
    pairs: Dict[int, np.ndarray] = field(default_factory=dict)
    nodes: Dict[int, np.ndarray] = field(default_factory=dict)
    values: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise DatasetError(f"Unknown task kind '{self.kind}', expected one of {TASK_KINDS}")
        if self.kind == "link" and (not self.src_type or not self.dst_type):
            raise DatasetError("link task needs src_type and dst_type")
        if self.kind != "link" and not self.target_type:
            raise DatasetError(f"{self.kind} task needs target_type")
        if self.kind == "classify" and (self.num_classes is None or self.num_classes < 2):
            raise DatasetError("classify task needs num_classes >= 2")

    @property
    def output_types(self) -> List[str]:
        if self.kind == "link":
            return list(dict.fromkeys([self.src_type, self.dst_type]))
        return [self.target_type]

    @property
    def output_dim_hint(self) -> Optional[int]:
        if self.kind == "classify":
            return self.num_classes
        if self.kind == "regress":
            return 1
        return None

    @property
    def same_type(self) -> bool:
        return self.kind == "link" and self.src_type == self.dst_type

    def positives(self, graph: HTGraph, t: int) -> np.ndarray:
        if self.relation:
            return graph.edges(t, graph.relation(self.relation).key)
        return self.pairs.get(t, np.zeros((0, 2), dtype=np.int64))

    def labeled(self, t: int):
        """(nodes, values) for node tasks at snapshot t"""
        nodes = self.nodes.get(t, np.zeros(0, dtype=np.int64))
        values = self.values.get(t, np.zeros(0))
        return nodes, values

    def has_targets(self, graph: HTGraph, t: int) -> bool:
        if self.kind == "link":
            return self.positives(graph, t).shape[0] > 0
        return self.labeled(t)[0].shape[0] > 0

    def validate(self, graph: HTGraph):
        for name in self.output_types:
            graph.node_type(name)
        if self.kind == "link":
            if self.relation:
                rel = graph.relation(self.relation)
                if (rel.src, rel.dst) != (self.src_type, self.dst_type):
                    raise DatasetError(
                        f"task relation '{rel.key}' does not connect {self.src_type} -> {self.dst_type}"
                    )
            for t, pairs in self.pairs.items():
                self._check_range(graph, t, pairs[:, 0], self.src_type, "src")
                self._check_range(graph, t, pairs[:, 1], self.dst_type, "dst")
            return
        for t, nodes in self.nodes.items():
            self._check_range(graph, t, nodes, self.target_type, "node")
            if nodes.shape[0] != self.values[t].shape[0]:
                raise DatasetError(f"labels at snapshot {t}: {nodes.shape[0]} nodes but {self.values[t].shape[0]} values")
            if self.kind == "classify":
                labels = self.values[t]
                if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes
                                    or not np.all(labels == np.round(labels))):
                    raise DatasetError(f"labels at snapshot {t} must be integers in [0, {self.num_classes})")

    @staticmethod
    def _check_range(graph: HTGraph, t: int, index: np.ndarray, type_name: str, role: str):
        if index.size == 0:
            return
        limit = graph.node_type(type_name).count
        if index.min() < 0 or index.max() >= limit:
            raise DatasetError(
                f"labels at snapshot {t}: {role} index out of range for type '{type_name}' with {limit} nodes"
            )

    def manifest_block(self) -> Dict:
        block = {"kind": self.kind}
        for key in ("src_type", "dst_type", "relation", "target_type", "num_classes"):
            value = getattr(self, key)
            if value is not None:
                block[key] = value
        return block
