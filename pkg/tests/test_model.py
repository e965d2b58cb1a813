"""
Tests for the dynamic relation-attention model: layers, forward pass against a
loop-based reference, structural invariants and parameter storage.
"""

import numpy as np
import pytest

from htgnn.ablation.variants import VariantConfig
from htgnn.core.gradcheck import grad_check_groups
from htgnn.core.recurrent import GRUWeights
from htgnn.core.sparse import SparseMatrix
from htgnn.core.tensor import Tensor, backward, parameter, tsum
from htgnn.data.graph import add_self_relation, build_graph
from htgnn.data.tasks import TaskSpec
from htgnn.errors import DimensionError, ModelError
from htgnn.model.layers import (aggregate_relation, dynamic_attention_step, fuse_relations, fuse_scores, mlp_head,
                                temporal_project)
from htgnn.model.params import ParamStore, group_of, load_checkpoint, save_checkpoint
from htgnn.model.htgnn_model import HTGNN
from tests import oracles


def oracle_inputs(model, graph):
    schema = add_self_relation(graph)
    relations = [(rel.key, rel.src, rel.dst) for rel in model.relations]
    edges = [{key: schema.edges(t, key).tolist() for key, _, _ in relations} for t in range(schema.T)]
    features = [{v: schema.features(t, v) for v in model.type_names} for t in range(schema.T)]
    counts = {nt.name: nt.count for nt in model.node_types}
    params = {name: tensor.data for name, tensor in model.params.items()}
    return params, counts, relations, edges, features


class TestLayers:
    """Test suite for the stateless building blocks"""

    def test_aggregation_applies_elu(self):
        """Test ELU of the normalized neighbor sum"""
        adj = SparseMatrix.from_entries(2, 2, [(0, 0, 0.5), (0, 1, 0.5), (1, 1, 1.0)])
        out = aggregate_relation(adj, Tensor([[2.0], [-4.0]]))
        assert out.data[0, 0] == pytest.approx(np.expm1(-1.0))
        assert out.data[1, 0] == pytest.approx(np.expm1(-4.0))

    def test_fusion_weights_sum_to_one(self, rng):
        """Test that relation weights are a distribution and fused is their weighted sum"""
        outputs = [Tensor(rng.normal(size=(3, 2))) for _ in range(3)]
        hidden = [Tensor(rng.normal(size=(3, 1))) for _ in range(3)]
        alpha, fused = fuse_relations(hidden, outputs)
        assert alpha.data.sum() == pytest.approx(1.0)
        expected = sum(a * o.data for a, o in zip(alpha.data, outputs))
        assert np.allclose(fused.data, expected)

    def test_fusion_ignores_a_common_shift(self, rng):
        """Test that adding a constant to every relation score leaves the weights unchanged"""
        outputs = [Tensor(rng.normal(size=(3, 2))) for _ in range(3)]
        scores = rng.normal(size=3)
        alpha, _ = fuse_scores(Tensor(scores), outputs)
        shifted, _ = fuse_scores(Tensor(scores + 7.5), outputs)
        assert np.allclose(alpha.data, shifted.data, atol=1e-9, rtol=0)

    def test_single_relation_gets_full_weight(self):
        """Test that one incoming relation receives weight one"""
        alpha, fused = fuse_scores(Tensor([4.2]), [Tensor([[1.0, 2.0]])])
        assert alpha.data[0] == 1.0
        assert np.array_equal(fused.data, [[1.0, 2.0]])

    def test_fusion_of_nothing(self):
        """Test that an empty relation set is a model error"""
        with pytest.raises(ModelError):
            fuse_relations([], [])

    def test_temporal_projection_averages_with_default_weights(self, rng):
        """Test that 1/window weights and zero bias give the window mean"""
        z = rng.normal(size=(2, 3, 4))
        out = temporal_project(Tensor(z), Tensor(np.full((4, 1), 0.25)), Tensor(np.zeros(1)))
        assert np.allclose(out.data[:, :, 0], z.mean(axis=2))

    def test_temporal_projection_shape_check(self):
        """Test that the window length must match the weight rows"""
        with pytest.raises(DimensionError):
            temporal_project(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((3, 1))), Tensor(np.zeros(1)))

    def test_head(self):
        """Test the two-layer head by hand"""
        out = mlp_head(Tensor([[1.0]]), Tensor([[2.0]]), Tensor([-3.0]), Tensor([[1.0]]), Tensor([0.5]))
        assert out.data[0, 0] == pytest.approx(np.expm1(-1.0) + 0.5)


class TestForwardAgainstReference:
    """Test suite comparing full forward passes with the loop-based reference"""

    @pytest.mark.parametrize("layers,heads", [(2, 1), (1, 2)])
    def test_dynamic_model(self, toy, toy_embeddings, make_model, layers, heads):
        """Test the dynamic model on the toy graph within 1e-8"""
        model = make_model(layers=layers, heads=heads)
        params, counts, relations, edges, features = oracle_inputs(model, toy.graph)
        expected = oracles.forward_oracle(params, model.type_names, counts, relations, edges, features, target=2,
                                          window=2, layers=layers, horizon=1, embeddings=toy_embeddings)
        result = model.forward(toy.graph, 2)
        for v in model.output_types:
            assert np.allclose(result.predictions[v][0].data, expected[v][0], atol=1e-8, rtol=0)

    def test_decoupled_baseline(self, toy, make_model):
        """Test the two-stage baseline on the toy graph within 1e-8"""
        model = make_model(kind="decoupled")
        params, counts, relations, edges, features = oracle_inputs(model, toy.graph)
        expected = oracles.forward_oracle(params, model.type_names, counts, relations, edges, features, target=2,
                                          window=2, layers=2, horizon=1, kind="decoupled")
        result = model.forward(toy.graph, 2)
        for v in model.output_types:
            assert np.allclose(result.predictions[v][0].data, expected[v][0], atol=1e-8, rtol=0)

    def test_gradients_match_finite_differences(self, toy, make_model):
        """Test every parameter group of the toy model"""
        model = make_model()
        weights = {v: Tensor(np.random.default_rng(5).normal(size=(5, 4))) for v in model.output_types}

        def loss(_):
            result = model.forward(toy.graph, 2)
            total = None
            for v in model.output_types:
                term = tsum(result.predictions[v][0] * weights[v])
                total = term if total is None else total + term
            return total

        errors = grad_check_groups(loss, model.params.groups())
        assert max(errors.values()) < 1e-4


class TestModelInvariants:
    """Test suite for structural properties of the model"""

    def test_attention_weights_are_distributions(self, toy, make_model):
        """Test that every (layer, type, snapshot) weight vector sums to one"""
        result = make_model().forward(toy.graph, 2)
        frame = result.attention.to_frame()
        sums = frame.groupby(["layer", "type", "snapshot"])["alpha"].sum()
        assert np.allclose(sums.values, 1.0)
        assert set(frame["relation"]) == {rel.key for rel in make_model().relations}

    @pytest.mark.parametrize("init", ["llm", "random", "average"])
    def test_initial_coefficients_are_distributions(self, make_model, init):
        """Test that initial coefficients over R(v) sum to one"""
        model = make_model(variant=VariantConfig(init=init))
        for v, coefficients in model.initial_coefficients().items():
            assert coefficients.shape == (len(model.incoming[v]),)
            assert coefficients.data.sum() == pytest.approx(1.0)

    def test_relation_order(self, make_model):
        """Test that self relations follow the declared relations in type order"""
        keys = [rel.key for rel in make_model().relations]
        assert keys == ["user:rates:item", "item:rated_by:user", "user:self:user", "item:self:item"]

    def test_llm_projection_only_when_used(self, make_model):
        """Test that WQ/WK exist only for llm-initialized stateful attention"""
        assert "llm.WQ" in make_model().params
        assert "llm.WQ" not in make_model(variant=VariantConfig(init="average")).params
        assert "llm.WK" not in make_model(kind="decoupled").params

    def test_missing_embeddings(self, toy):
        """Test that llm initialization needs type embeddings"""
        with pytest.raises(ModelError):
            HTGNN(toy.graph, toy.task, hidden_dim=4, window=2)

    def test_window_growth(self, make_model):
        """Test that a longer window adds only temporal weights, but per-position scorers for the baseline"""
        d, layers = 4, 2
        assert make_model(window=3).count_parameters() - make_model(window=2).count_parameters() == 1
        grown = make_model(kind="decoupled", window=3).count_parameters() - \
            make_model(kind="decoupled", window=2).count_parameters()
        assert grown == 1 + layers * (d * d + 2 * d)

    def test_target_must_leave_room_for_the_window(self, toy, make_model):
        """Test that a target before the window is rejected"""
        with pytest.raises(ModelError):
            make_model().forward(toy.graph, 1)

    def test_schema_mismatch(self, toy, make_model):
        """Test that a graph with a different schema is rejected"""
        model = make_model()
        rates = toy.graph.relation_types[0]
        snapshots = toy.graph.snapshots
        other = build_graph(toy.graph.node_types, [rates], [{rates.key: s.edges[rates.key]} for s in snapshots],
                            [s.features for s in snapshots])
        with pytest.raises(ModelError):
            model.forward(other, 2)

    @pytest.mark.parametrize("kind,shape", [("classify", (5, 3)), ("regress", (5,))])
    def test_node_task_heads(self, toy, make_model, kind, shape):
        """Test output shapes for node-level tasks"""
        nodes = {2: np.arange(5)}
        if kind == "classify":
            task = TaskSpec(kind="classify", target_type="user", num_classes=3, nodes=nodes,
                            values={2: np.array([0, 1, 2, 0, 1])})
        else:
            task = TaskSpec(kind="regress", target_type="user", nodes=nodes, values={2: np.zeros(5)})
        result = make_model(task=task).forward(toy.graph, 2)
        assert list(result.predictions) == ["user"]
        assert result.predictions["user"][0].shape == shape

    def test_horizon_steps(self, toy, make_model):
        """Test that one output per horizon step is produced"""
        result = make_model(window=1, horizon=2).forward(toy.graph, 1)
        assert len(result.predictions["item"]) == 2

    def test_forward_is_stateless(self, toy, make_model):
        """Test that repeated forward passes give identical predictions"""
        model = make_model()
        first = model.forward(toy.graph, 2).predictions["user"][0].data
        second = model.forward(toy.graph, 2).predictions["user"][0].data
        assert np.array_equal(first, second)

    def test_later_snapshots_do_not_reach_the_prediction(self, toy, make_model):
        """Test that rewriting every snapshot from the target on leaves its predictions bit-identical"""
        model = make_model()
        snapshots = toy.graph.snapshots
        edges = [s.edges if t < 2 else snapshots[0].edges for t, s in enumerate(snapshots)]
        features = [s.features if t < 2 else {v: np.zeros_like(x) for v, x in s.features.items()}
                    for t, s in enumerate(snapshots)]
        rewritten = build_graph(toy.graph.node_types, toy.graph.relation_types, edges, features)
        before, after = model.forward(toy.graph, 2), model.forward(rewritten, 2)
        for v in model.output_types:
            assert np.array_equal(before.predictions[v][0].data, after.predictions[v][0].data)
        assert before.attention.to_frame().equals(after.attention.to_frame())

    def test_permuted_nodes_permute_predictions(self, toy, make_model):
        """Test that relabelling the users relabels their output rows and keeps the relation weights"""
        model = make_model()
        perm = np.random.default_rng(3).permutation(5)
        inverse = np.argsort(perm)
        edges, features = [], []
        for s in toy.graph.snapshots:
            relabelled = {}
            for rel in toy.graph.relation_types:
                pairs = np.array(s.edges[rel.key])
                if rel.src == "user":
                    pairs[:, 0] = inverse[pairs[:, 0]]
                if rel.dst == "user":
                    pairs[:, 1] = inverse[pairs[:, 1]]
                relabelled[rel.key] = pairs
            edges.append(relabelled)
            features.append({**s.features, "user": s.features["user"][perm]})
        permuted = build_graph(toy.graph.node_types, toy.graph.relation_types, edges, features)
        before, after = model.forward(toy.graph, 2), model.forward(permuted, 2)
        assert np.allclose(after.predictions["user"][0].data, before.predictions["user"][0].data[perm],
                           atol=1e-12, rtol=0)
        assert np.allclose(after.predictions["item"][0].data, before.predictions["item"][0].data,
                           atol=1e-12, rtol=0)
        assert np.allclose(after.attention.to_frame()["alpha"], before.attention.to_frame()["alpha"],
                           atol=1e-12, rtol=0)

    def test_identical_rows_get_identical_attention_states(self, rng):
        """Test that nodes with equal relation outputs and equal states stay equal after a step"""
        h = rng.normal(size=(4, 3))
        h[2] = h[0]
        e_prev = rng.normal(size=(4, 2))
        e_prev[2] = e_prev[0]
        out = dynamic_attention_step(Tensor(h), Tensor(e_prev), GRUWeights.init(3, 2, rng)).data
        assert np.allclose(out[2], out[0], atol=1e-15, rtol=0)
        assert not np.allclose(out[1], out[0])

    def test_scaled_source_changes_only_its_relations(self, toy, make_model):
        """Test that scaling user features moves only the relations fed by users at the first layer"""
        model = make_model()
        snapshots = toy.graph.snapshots
        scaled = build_graph(toy.graph.node_types, toy.graph.relation_types, [s.edges for s in snapshots],
                             [{**s.features, "user": s.features["user"] * 3.0} for s in snapshots])
        before = model.forward(toy.graph, 2, keep_intermediates=True)
        after = model.forward(scaled, 2, keep_intermediates=True)
        scores_before, scores_after = before.attention.to_frame(), after.attention.to_frame()
        for rel in model.relations:
            for t in (0, 1):
                unchanged = np.array_equal(before.relation_outputs[(0, t, rel.key)],
                                           after.relation_outputs[(0, t, rel.key)])
                assert unchanged == (rel.src != "user"), (rel.key, t)
            rows = (scores_before["layer"] == 0) & (scores_before["relation"] == rel.key)
            same_chain = np.array_equal(scores_before[rows]["score"].to_numpy(), scores_after[rows]["score"].to_numpy())
            assert same_chain == (rel.src != "user"), rel.key

    def test_duplicated_heads_match_one_head(self, toy, make_model):
        """Test that two identical attention heads give the single-head relation weights"""
        variant = VariantConfig(init="average")
        one, two = make_model(variant=variant), make_model(variant=variant, heads=2)
        for name, tensor in two.params.items():
            source = one.params[name].data
            if name.startswith("gru.") and name[-2:] in ("Uz", "Ur", "Uh"):
                tensor.data[...] = source[0, 0] * np.eye(2)
            elif source.shape == tensor.shape:
                tensor.data[...] = source
            else:
                tensor.data[...] = np.concatenate([source, source], axis=-1)
        a, b = one.forward(toy.graph, 2), two.forward(toy.graph, 2)
        assert np.allclose(a.attention.to_frame()["alpha"], b.attention.to_frame()["alpha"], atol=1e-12, rtol=0)
        for v in one.output_types:
            assert np.allclose(a.predictions[v][0].data, b.predictions[v][0].data, atol=1e-10, rtol=0)

    def test_loss_reaches_the_type_projections(self, toy, make_model):
        """Test that the initial coefficients pass a non-zero gradient into WQ and WK"""
        model = make_model()
        result = model.forward(toy.graph, 2)
        backward(tsum(result.predictions["user"][0]) + tsum(result.predictions["item"][0]))
        for name in ("llm.WQ", "llm.WK"):
            grad = model.params[name].grad
            assert grad is not None and np.abs(grad).max() > 0, name


    def test_seeded_construction(self, make_model):
        """Test that the same seed gives the same parameters"""
        a, b = make_model(seed=4).params.state_dict(), make_model(seed=4).params.state_dict()
        assert all(np.array_equal(a[name], b[name]) for name in a)


class TestParamStore:
    """Test suite for parameter storage and checkpoints"""

    def test_duplicate_name(self):
        """Test that names are unique"""
        store = ParamStore()
        store.add("head.1.W", np.zeros(2))
        with pytest.raises(ModelError):
            store.add("head.1.W", np.zeros(2))

    def test_groups(self):
        """Test group names for per-relation and shared parameters"""
        assert group_of("gru.0.user:rates:item.Wz") == "gru.0.user:rates:item"
        assert group_of("head.1.W") == "head"
        assert group_of("proj.user.W") == "proj"

    def test_freeze(self):
        """Test that frozen parameters drop out of the trainable list"""
        store = ParamStore()
        store.add("llm.WQ", np.zeros((2, 2)))
        store.add("head.1.W", np.zeros(2))
        store.freeze("llm.")
        assert [name for name, _ in store.trainable()] == ["head.1.W"]

    def test_checkpoint_round_trip(self, make_model, tmp_path):
        """Test that a checkpoint restores every tensor bit for bit"""
        model = make_model()
        path = str(tmp_path / "checkpoint.bin")
        model.params.save(path)
        restored = make_model(seed=9)
        restored.params.load(path)
        for name, tensor in model.params.items():
            assert np.array_equal(tensor.data, restored.params[name].data)

    def test_bad_magic(self, tmp_path):
        """Test that foreign files are not read as checkpoints"""
        path = tmp_path / "foreign.bin"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(ModelError):
            load_checkpoint(str(path))

    def test_truncated(self, tmp_path):
        """Test that a cut-off checkpoint is reported"""
        path = str(tmp_path / "cut.bin")
        save_checkpoint({"w": np.arange(6.0).reshape(2, 3)}, path)
        with open(path, "rb") as f:
            blob = f.read()
        with open(path, "wb") as f:
            f.write(blob[:-8])
        with pytest.raises(ModelError):
            load_checkpoint(path)

    def test_state_mismatch(self):
        """Test that loading a state with other names fails"""
        store = ParamStore()
        store.add("a", np.zeros(1))
        with pytest.raises(ModelError):
            store.load_state({"b": np.zeros(1)})


class TestGRUParameters:
    """Test suite for GRU weight registration"""

    def test_cells_share_store_tensors(self, make_model):
        """Test that attention cells use the tensors held by the store"""
        model = make_model()
        cell = model.cells[(0, "user:rates:item")]
        assert isinstance(cell, GRUWeights)
        assert cell.Wz is model.params["gru.0.user:rates:item.Wz"]

    def test_store_tensors_are_leaves(self):
        """Test that the store's tensors are ordinary leaves"""
        store = ParamStore()
        w = store.add("w", np.ones(2))
        assert w.requires_grad and w.is_leaf
        assert parameter([1.0]).requires_grad
