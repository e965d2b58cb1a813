"""
Tests for the graph container, adjacency normalization, temporal splits and task specs
"""

import math

import numpy as np
import pytest

from htgnn.data.adjacency import normalize_adjacency, relation_adjacency, resolve_normalization
from htgnn.data.graph import (NodeType, RelationType, add_self_relation, build_graph, self_relation,
                              without_self_relations)
from htgnn.data.splits import split_temporal
from htgnn.data.tasks import TaskSpec
from htgnn.errors import DatasetError, SplitError


def two_type_graph(T=2, edges=None):
    user = NodeType("user", 2, 1)
    item = NodeType("item", 3, 2)
    rel = RelationType("rates", "user", "item")
    edges = edges if edges is not None else [[0, 0], [1, 2]]
    return build_graph(
        [user, item], [rel],
        [{rel.key: np.array(edges)} for _ in range(T)],
        [{"user": np.zeros((2, 1)), "item": np.ones((3, 2))} for _ in range(T)],
    )


class TestHTGraph:
    """Test suite for graph construction and validation"""

    def test_relation_key(self):
        """Test that relation keys join source, name and destination"""
        assert RelationType("rates", "user", "item").key == "user:rates:item"

    def test_relations_into(self):
        """Test that R(v) lists relations by destination type"""
        graph = two_type_graph()
        assert [rel.key for rel in graph.relations_into("item")] == ["user:rates:item"]
        assert graph.relations_into("user") == []

    def test_summary(self):
        """Test the summary counts"""
        summary = two_type_graph(T=3).summary()
        assert summary["T"] == 3
        assert summary["edges"] == 6
        assert summary["node_types"] == {"user": 2, "item": 3}

    def test_edge_index_out_of_range(self):
        """Test that an edge pointing past a type's node count is rejected"""
        with pytest.raises(DatasetError) as excinfo:
            two_type_graph(edges=[[0, 3]])
        assert "item" in str(excinfo.value)

    def test_feature_shape_checked(self):
        """Test that feature matrices must be count x feature_dim"""
        user = NodeType("user", 2, 1)
        with pytest.raises(DatasetError):
            build_graph([user], [], [{}], [{"user": np.zeros((2, 2))}])

    def test_non_finite_features(self):
        """Test that NaN features are rejected"""
        user = NodeType("user", 1, 1)
        with pytest.raises(DatasetError):
            build_graph([user], [], [{}], [{"user": np.array([[np.nan]])}])

    def test_unknown_endpoint_type(self):
        """Test that a relation must connect declared types"""
        user = NodeType("user", 1, 1)
        rel = RelationType("follows", "user", "group")
        with pytest.raises(DatasetError):
            build_graph([user], [rel], [{rel.key: np.zeros((0, 2))}], [{"user": np.zeros((1, 1))}])

    def test_reserved_characters_in_names(self):
        """Test that names may not contain key separators"""
        with pytest.raises(DatasetError):
            build_graph([NodeType("a:b", 1, 1)], [], [{}], [{"a:b": np.zeros((1, 1))}])

    def test_strict_requires_heterogeneity(self):
        """Test that strict validation needs at least two types in total"""
        with pytest.raises(DatasetError):
            build_graph([NodeType("user", 1, 1)], [], [{}], [{"user": np.zeros((1, 1))}], strict=True)

    def test_snapshot_arrays_are_read_only(self):
        """Test that stored edges cannot be mutated in place"""
        graph = two_type_graph()
        with pytest.raises(ValueError):
            graph.edges(0, "user:rates:item")[0, 0] = 1

    def test_relation_lookup_by_name(self):
        """Test lookup by bare name when unambiguous"""
        assert two_type_graph().relation("rates").dst == "item"
        with pytest.raises(DatasetError):
            two_type_graph().relation("missing")


class TestSelfRelations:
    """Test suite for identity relations"""

    def test_adds_identity_edges(self):
        """Test that every type gets an identity relation appended in type order"""
        graph = add_self_relation(two_type_graph())
        assert graph.relation_keys[-2:] == ["user:self:user", "item:self:item"]
        assert np.array_equal(graph.edges(0, "item:self:item"), [[0, 0], [1, 1], [2, 2]])
        assert self_relation("user").is_self

    def test_idempotent(self):
        """Test that adding twice changes nothing"""
        once = add_self_relation(two_type_graph())
        assert add_self_relation(once) is once

    def test_removal_restores_the_original(self):
        """Test that removing self relations gives back the declared relations"""
        graph = two_type_graph()
        assert without_self_relations(add_self_relation(graph)).equals(graph)


class TestAdjacency:
    """Test suite for normalized adjacency"""

    EDGES = [(0, 0), (1, 0), (1, 1)]

    def test_row_normalization(self):
        """Test 1 / in-degree weights with the [dst, src] layout"""
        adj = normalize_adjacency(self.EDGES, 2, 2, "row")
        assert np.allclose(adj.to_dense(), [[0.5, 0.5], [0.0, 1.0]])

    def test_symmetric_normalization(self):
        """Test 1 / sqrt(in-degree(dst) * out-degree(src)) weights"""
        adj = normalize_adjacency(self.EDGES, 2, 2, "sym").to_dense()
        assert adj[0, 0] == pytest.approx(1 / math.sqrt(2))
        assert adj[0, 1] == pytest.approx(0.5)
        assert adj[1, 1] == pytest.approx(1 / math.sqrt(2))
        assert adj[1, 0] == 0.0

    def test_duplicates_count_once(self):
        """Test that repeated pairs do not change the weights"""
        adj = normalize_adjacency(self.EDGES + [(0, 0)], 2, 2, "row")
        assert np.allclose(adj.to_dense(), [[0.5, 0.5], [0.0, 1.0]])

    def test_isolated_destination_row_is_zero(self):
        """Test that a destination without in-edges keeps a zero row"""
        adj = normalize_adjacency([(0, 0)], 3, 1, "row").to_dense()
        assert np.array_equal(adj[1:], np.zeros((2, 1)))

    def test_row_sums_are_one_or_zero(self, rng):
        """Test row sums of random row-normalized adjacency"""
        edges = np.stack([rng.integers(0, 7, 30), rng.integers(0, 9, 30)], axis=1)
        sums = normalize_adjacency(edges, 9, 7, "row").row_sums()
        assert np.all(np.isclose(sums, 1.0) | (sums == 0.0))

    def test_empty_edges(self):
        """Test that no edges give an all-zero matrix"""
        assert normalize_adjacency(np.zeros((0, 2)), 2, 3).nnz == 0

    def test_auto_resolution(self):
        """Test that auto picks sym for same-type relations and row otherwise"""
        assert resolve_normalization(RelationType("coauthor", "a", "a"), "auto") == "sym"
        assert resolve_normalization(RelationType("writes", "a", "p"), "auto") == "row"
        assert resolve_normalization(RelationType("writes", "a", "p"), "sym") == "sym"
        with pytest.raises(ValueError):
            resolve_normalization(RelationType("writes", "a", "p"), "l1")

    def test_memoized_on_graph(self):
        """Test that relation adjacency is computed once per snapshot"""
        graph = two_type_graph()
        rel = graph.relation("rates")
        assert relation_adjacency(graph, 0, rel) is relation_adjacency(graph, 0, rel)
        assert relation_adjacency(graph, 0, rel).shape == (3, 2)


class TestSplitTemporal:
    """Test suite for temporal splits"""

    def test_twelve_snapshots(self):
        """Test T=12, window 8, horizon 1 with one validation and one test target"""
        split = split_temporal(12, window=8, horizon=1, n_val=1, n_test=1)
        assert split.train == (8, 9)
        assert split.val == (10,)
        assert split.test == (11,)

    def test_minimal(self):
        """Test T=3, window 1 without validation"""
        split = split_temporal(3, window=1, horizon=1, n_val=0, n_test=1)
        assert split.train == (1,)
        assert split.val == ()
        assert split.test == (2,)

    def test_insufficient_snapshots(self):
        """Test that too short a sequence is rejected with the arithmetic in the message"""
        with pytest.raises(SplitError) as excinfo:
            split_temporal(5, window=4, horizon=1, n_val=1, n_test=1)
        assert "T = 5" in str(excinfo.value)

    def test_split_error_is_a_dataset_error(self):
        """Test the error hierarchy"""
        with pytest.raises(DatasetError):
            split_temporal(2, window=2, horizon=1, n_val=0, n_test=0)

    def test_windows_precede_targets(self):
        """Test that every window ends right before its target and horizons stay in range"""
        split = split_temporal(10, window=3, horizon=2, n_val=1, n_test=1)
        for t in split.targets:
            assert list(split.window_of(t)) == [t - 3, t - 2, t - 1]
            assert max(split.steps_of(t)) <= 9
        assert split.test == (8,)

    def test_accepts_a_graph(self):
        """Test that the snapshot count is read from a graph"""
        assert split_temporal(two_type_graph(T=3), 2, 1, 0, 0).train == (2,)


class TestTaskSpec:
    """Test suite for task specifications"""

    def test_link_needs_endpoint_types(self):
        """Test that link tasks name both endpoint types"""
        with pytest.raises(DatasetError):
            TaskSpec(kind="link", src_type="user")

    def test_classify_needs_classes(self):
        """Test that classification needs at least two classes"""
        with pytest.raises(DatasetError):
            TaskSpec(kind="classify", target_type="user", num_classes=1)

    def test_unknown_kind(self):
        """Test that unknown task kinds are rejected"""
        with pytest.raises(DatasetError):
            TaskSpec(kind="rank", target_type="user")

    def test_positives_from_relation(self):
        """Test that relation-backed link tasks read the graph's edges"""
        task = TaskSpec(kind="link", src_type="user", dst_type="item", relation="rates")
        assert task.positives(two_type_graph(), 1).shape == (2, 2)
        assert task.output_types == ["user", "item"]
        assert not task.same_type

    def test_label_out_of_range(self):
        """Test that class labels must be below num_classes"""
        task = TaskSpec(kind="classify", target_type="item", num_classes=2,
                        nodes={1: np.array([0, 1])}, values={1: np.array([0, 2])})
        with pytest.raises(DatasetError):
            task.validate(two_type_graph())

    def test_relation_must_match_endpoints(self):
        """Test that the task relation connects the declared types"""
        task = TaskSpec(kind="link", src_type="item", dst_type="user", relation="rates")
        with pytest.raises(DatasetError):
            task.validate(two_type_graph())
