"""
Tests for reading and writing the on-disk dataset layout
"""

import json
import os

import numpy as np
import pytest

from htgnn.data.dataset_parser import DatasetParser, load_dataset, load_task, resolve_manifest, write_dataset
from htgnn.data.synthetic import SynthConfig, generate_synthetic
from htgnn.errors import DatasetError


@pytest.fixture
def written(toy, tmp_path):
    return write_dataset(toy.graph, str(tmp_path / "toy"), toy.task)


class TestDatasetRoundTrip:
    """Test suite for dataset write and load"""

    def test_graph_round_trip(self, toy, written):
        """Test that a written graph loads back equal, features bit for bit"""
        assert load_dataset(written).equals(toy.graph)

    def test_task_round_trip(self, toy, written):
        """Test that the relation-backed task survives"""
        graph = load_dataset(written)
        task = load_task(written, graph)
        assert task.kind == "link"
        assert task.relation == toy.task.relation
        assert np.array_equal(task.positives(graph, 0), toy.task.positives(toy.graph, 0))

    def test_classify_labels_round_trip(self, tmp_path):
        """Test that node labels are written and read per snapshot"""
        data = generate_synthetic(SynthConfig(kind="classify", T=3, counts={"author": 20, "paper": 30, "venue": 2},
                                              n_communities=3, seed=1))
        manifest = write_dataset(data.graph, str(tmp_path / "cls"), data.task)
        task = load_task(manifest, load_dataset(manifest))
        assert task.num_classes == 3
        assert np.array_equal(task.values[2], data.task.values[2])

    def test_manifest_layout(self, written):
        """Test manifest fields and file templates"""
        with open(written, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        assert manifest["T"] == 3
        assert [nt["name"] for nt in manifest["node_types"]] == ["user", "item"]
        root = os.path.dirname(written)
        assert os.path.exists(os.path.join(root, "edges", "rates", "0.csv"))
        assert os.path.exists(os.path.join(root, "features", "item", "2.csv"))

    def test_resolve_manifest(self, written):
        """Test that a dataset directory resolves to its manifest"""
        manifest, root = resolve_manifest(os.path.dirname(written))
        assert manifest == written


class TestDatasetErrors:
    """Test suite for malformed datasets"""

    def test_missing_manifest(self, tmp_path):
        """Test that a missing manifest is reported"""
        with pytest.raises(DatasetError):
            load_dataset(str(tmp_path / "nowhere.json"))

    def test_edge_index_out_of_range(self, written):
        """Test that a bad edge row names the file, snapshot and relation"""
        path = os.path.join(os.path.dirname(written), "edges", "rates", "1.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("src,dst\n0,99\n")
        with pytest.raises(DatasetError) as excinfo:
            load_dataset(written)
        message = str(excinfo.value)
        assert "1.csv" in message and "snapshot 1" in message and "rates" in message

    @pytest.mark.parametrize("row", ["0,abc", "1.5,0"])
    def test_non_integer_edge_index(self, written, row):
        """Test that a non-integer edge cell is a dataset error naming the file and line"""
        path = os.path.join(os.path.dirname(written), "edges", "rates", "1.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"src,dst\n0,1\n{row}\n")
        with pytest.raises(DatasetError) as excinfo:
            load_dataset(written)
        message = str(excinfo.value)
        assert "1.csv" in message and "non-integer" in message and "line 3" in message

    def test_wrong_feature_shape(self, written):
        """Test that a feature file with the wrong width is rejected"""
        path = os.path.join(os.path.dirname(written), "features", "user", "0.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("1.0\n" * 5)
        with pytest.raises(DatasetError):
            load_dataset(written)

    def test_reserved_relation_name(self, written):
        """Test that datasets may not declare the identity relation"""
        with open(written, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        manifest["relation_types"].append({"name": "self", "src": "user", "dst": "user"})
        with open(written, "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        with pytest.raises(DatasetError):
            DatasetParser().load(written)

    def test_unknown_task_field(self, written):
        """Test that the task block is checked for unknown keys"""
        with open(written, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        manifest["task"]["weighting"] = "uniform"
        with open(written, "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        with pytest.raises(DatasetError):
            load_task(written, load_dataset(written))
