import json
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from htgnn.data.graph import SELF_RELATION, HTGraph, NodeType, RelationType, Snapshot
from htgnn.data.tasks import TaskSpec
from htgnn.errors import DatasetError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"
DEFAULT_FILES = {
    "edges": "edges/{relation}/{t}.csv",
    "features": "features/{type}/{t}.csv",
    "labels": "labels/{t}.csv",
}


class DatasetParser:
    """Reads and writes the plain-text HTG dataset directory layout"""

    def __init__(self):
        self.label_readers = {
            "link": self._read_link_labels,
            "classify": self._read_classify_labels,
            "regress": self._read_regress_labels,
        }

    # Loading

    def load(self, manifest_path: str) -> HTGraph:
        manifest = self._read_manifest(manifest_path)
        root = os.path.dirname(os.path.abspath(manifest_path))
        files = {**DEFAULT_FILES, **manifest.get("files", {})}
        node_types = self._parse_node_types(manifest)
        relation_types = self._parse_relation_types(manifest)
        T = self._require(manifest, "T", int, "manifest")
        if T < 1:
            raise DatasetError(f"manifest field 'T' must be >= 1, got {T}")

        snapshots = []
        for t in range(T):
            edges = {}
            for rel in relation_types:
                path = os.path.join(root, files["edges"].format(relation=rel.name, t=t))
                edges[rel.key] = self._read_edges(path, rel, t, node_types)
            features = {}
            for nt in node_types:
                path = os.path.join(root, files["features"].format(type=nt.name, t=t))
                features[nt.name] = self._read_features(path, nt)
            snapshots.append(Snapshot(edges, features))

        graph = HTGraph(node_types, relation_types, snapshots, strict=True)
        logger.info(f"Loaded dataset {manifest_path}: {graph.summary()}")
        return graph

    def load_task(self, manifest_path: str, graph: HTGraph) -> Optional[TaskSpec]:
        manifest = self._read_manifest(manifest_path)
        block = manifest.get("task")
        if not block:
            return None
        root = os.path.dirname(os.path.abspath(manifest_path))
        files = {**DEFAULT_FILES, **manifest.get("files", {})}
        known = {"kind", "src_type", "dst_type", "relation", "target_type", "num_classes"}
        unknown = set(block) - known
        if unknown:
            raise DatasetError(f"manifest task block has unknown fields {sorted(unknown)}")
        task = TaskSpec(**block)
        if task.kind == "link" and task.relation:
            task.validate(graph)
            return task

        reader = self.label_readers[task.kind]
        for t in range(graph.T):
            path = os.path.join(root, files["labels"].format(t=t))
            if os.path.exists(path):
                reader(path, task, t)
        task.validate(graph)
        logger.info(f"Loaded {task.kind} task from {manifest_path}")
        return task

    def _read_manifest(self, manifest_path: str) -> Dict:
        if not os.path.exists(manifest_path):
            raise DatasetError(f"Manifest not found: {manifest_path}")
        try:
            with open(manifest_path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"Manifest {manifest_path} is not valid JSON: {e}") from e
        if not isinstance(manifest, dict):
            raise DatasetError(f"Manifest {manifest_path} must be a JSON object")
        return manifest

    @staticmethod
    def _require(record: Dict, key: str, kind, where: str):
        if key not in record:
            raise DatasetError(f"{where} is missing field '{key}'")
        value = record[key]
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise DatasetError(f"{where} field '{key}' must be an integer, got {value!r}")
        if kind is str and not isinstance(value, str):
            raise DatasetError(f"{where} field '{key}' must be a string, got {value!r}")
        return value

    def _parse_node_types(self, manifest: Dict) -> List[NodeType]:
        entries = manifest.get("node_types")
        if not isinstance(entries, list) or not entries:
            raise DatasetError("manifest field 'node_types' must be a non-empty list")
        node_types = []
        for i, entry in enumerate(entries):
            where = f"node_types[{i}]"
            node_types.append(NodeType(
                name=self._require(entry, "name", str, where),
                count=self._require(entry, "count", int, where),
                feature_dim=self._require(entry, "feature_dim", int, where),
                description=entry.get("description", "") or "",
            ))
        return node_types

    def _parse_relation_types(self, manifest: Dict) -> List[RelationType]:
        entries = manifest.get("relation_types", [])
        if not isinstance(entries, list):
            raise DatasetError("manifest field 'relation_types' must be a list")
        relations = []
        for i, entry in enumerate(entries):
            where = f"relation_types[{i}]"
            name = self._require(entry, "name", str, where)
            if name == SELF_RELATION:
                raise DatasetError(f"{where} uses the reserved relation name '{SELF_RELATION}'")
            relations.append(RelationType(name, self._require(entry, "src", str, where),
                                          self._require(entry, "dst", str, where)))
        names = [rel.name for rel in relations]
        if len(set(names)) != len(names):
            raise DatasetError(f"relation names must be unique within a dataset, got {names}")
        return relations

    def _read_csv(self, path: str, **kwargs) -> pd.DataFrame:
        if not os.path.exists(path):
            logger.error(f"Dataset file not found: {path}")
            raise DatasetError(f"Dataset file not found: {path}")
        try:
            return pd.read_csv(path, **kwargs)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
            raise DatasetError(f"Could not parse {path}: {e}") from e

    def _index_pairs(self, path: str, frame: pd.DataFrame, where: str) -> np.ndarray:
        numeric = frame[["src", "dst"]].apply(pd.to_numeric, errors="coerce")
        bad = (numeric.isna() | (numeric % 1 != 0)).any(axis=1)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetError(f"{path}: {where} has a non-integer node index on line {row + 2}: "
                               f"{frame.iloc[row].tolist()}")
        return numeric.to_numpy(dtype=np.int64)

    def _read_edges(self, path: str, rel: RelationType, t: int, node_types: List[NodeType]) -> np.ndarray:
        frame = self._read_csv(path)
        if list(frame.columns) != ["src", "dst"]:
            raise DatasetError(f"{path}: expected header 'src,dst', got {','.join(map(str, frame.columns))}")
        edges = self._index_pairs(path, frame, f"snapshot {t}, relation '{rel.name}'")
        counts = {nt.name: nt.count for nt in node_types}
        for column, type_name in ((0, rel.src), (1, rel.dst)):
            if type_name not in counts:
                raise DatasetError(f"relation '{rel.name}' references unknown node type '{type_name}'")
            if edges.size and (edges[:, column].min() < 0 or edges[:, column].max() >= counts[type_name]):
                raise DatasetError(
                    f"{path}: snapshot {t}, relation '{rel.name}' has an index out of range for "
                    f"type '{type_name}' with {counts[type_name]} nodes"
                )
        return edges

    def _read_features(self, path: str, nt: NodeType) -> np.ndarray:
        frame = self._read_csv(path, header=None, dtype=np.float64, float_precision="round_trip")
        values = frame.to_numpy(dtype=np.float64)
        if values.shape != (nt.count, nt.feature_dim):
            raise DatasetError(
                f"{path}: expected {nt.count} rows x {nt.feature_dim} columns for type '{nt.name}', got {values.shape}"
            )
        return values

    def _read_link_labels(self, path: str, task: TaskSpec, t: int):
        frame = self._read_csv(path)
        self._expect_columns(path, frame, ["src", "dst"])
        task.pairs[t] = self._index_pairs(path, frame, f"snapshot {t} labels")

    def _read_classify_labels(self, path: str, task: TaskSpec, t: int):
        frame = self._read_csv(path)
        self._expect_columns(path, frame, ["node", "label"])
        task.nodes[t] = frame["node"].to_numpy(dtype=np.int64)
        task.values[t] = frame["label"].to_numpy(dtype=np.int64)

    def _read_regress_labels(self, path: str, task: TaskSpec, t: int):
        frame = self._read_csv(path, float_precision="round_trip")
        self._expect_columns(path, frame, ["node", "value"])
        task.nodes[t] = frame["node"].to_numpy(dtype=np.int64)
        task.values[t] = frame["value"].to_numpy(dtype=np.float64)

    @staticmethod
    def _expect_columns(path: str, frame: pd.DataFrame, columns: List[str]):
        if list(frame.columns) != columns:
            raise DatasetError(f"{path}: expected header '{','.join(columns)}', got {','.join(map(str, frame.columns))}")

    # Writing

    def write(self, graph: HTGraph, out_dir: str, task: Optional[TaskSpec] = None) -> str:
        relations = [rel for rel in graph.relation_types if not rel.is_self]
        names = [rel.name for rel in relations]
        if len(set(names)) != len(names):
            raise DatasetError(f"relation names must be unique to be written, got {names}")
        os.makedirs(out_dir, exist_ok=True)
        manifest = {
            "format_version": FORMAT_VERSION,
            "T": graph.T,
            "node_types": [
                {"name": nt.name, "count": nt.count, "feature_dim": nt.feature_dim, "description": nt.description}
                for nt in graph.node_types
            ],
            "relation_types": [{"name": rel.name, "src": rel.src, "dst": rel.dst} for rel in relations],
            "files": dict(DEFAULT_FILES),
        }
        for t in range(graph.T):
            for rel in relations:
                path = self._prepare(out_dir, DEFAULT_FILES["edges"].format(relation=rel.name, t=t))
                pd.DataFrame(graph.edges(t, rel.key), columns=["src", "dst"]).to_csv(path, index=False)
            for nt in graph.node_types:
                path = self._prepare(out_dir, DEFAULT_FILES["features"].format(type=nt.name, t=t))
                pd.DataFrame(graph.features(t, nt.name)).to_csv(
                    path, header=False, index=False, float_format=FLOAT_FORMAT
                )
        if task is not None:
            manifest["task"] = task.manifest_block()
            self._write_labels(out_dir, task)

        manifest_path = os.path.join(out_dir, "manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
        logger.info(f"Wrote dataset to {out_dir}: {graph.summary()}")
        return manifest_path

    def _write_labels(self, out_dir: str, task: TaskSpec):
        if task.kind == "link":
            if task.relation:
                return
            for t, pairs in sorted(task.pairs.items()):
                path = self._prepare(out_dir, DEFAULT_FILES["labels"].format(t=t))
                pd.DataFrame(pairs, columns=["src", "dst"]).to_csv(path, index=False)
            return
        column = "label" if task.kind == "classify" else "value"
        for t, nodes in sorted(task.nodes.items()):
            path = self._prepare(out_dir, DEFAULT_FILES["labels"].format(t=t))
            frame = pd.DataFrame({"node": nodes, column: task.values[t]})
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)

    @staticmethod
    def _prepare(out_dir: str, relative: str) -> str:
        path = os.path.join(out_dir, relative)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path


def load_dataset(manifest_path: str) -> HTGraph:
    return DatasetParser().load(manifest_path)


def load_task(manifest_path: str, graph: HTGraph) -> Optional[TaskSpec]:
    return DatasetParser().load_task(manifest_path, graph)


def write_dataset(graph: HTGraph, out_dir: str, task: Optional[TaskSpec] = None) -> str:
    return DatasetParser().write(graph, out_dir, task)


def resolve_manifest(path: str) -> Tuple[str, str]:
    """Accept a dataset directory or a manifest path; return (manifest, directory)"""
    if os.path.isdir(path):
        return os.path.join(path, "manifest.json"), path
    return path, os.path.dirname(os.path.abspath(path))
