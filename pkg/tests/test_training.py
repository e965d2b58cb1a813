"""
Tests for losses, metrics, negative sampling, the optimizer and the training loop
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from htgnn.config import OptimizerConfig, TrainingConfig
from htgnn.core.tensor import Tensor, backward, parameter
from htgnn.data.splits import TemporalSplit, split_temporal
from htgnn.data.tasks import TaskSpec
from htgnn.errors import DimensionError, NonFiniteError, TrainingError
from htgnn.model.params import ParamStore
from htgnn.services.losses import classify_loss, link_loss, pair_scores, regress_loss
from htgnn.services.metrics import average_precision, compute_metrics, macro_f1, roc_auc
from htgnn.services.negative_sampling import draw_negatives, sample_negatives
from htgnn.services.optimizer import Adam, OptimState, adam_step
from htgnn.services.trainer import Trainer
from tests import oracles


def toy_trainer(toy, make_model, epochs=5, patience=5, lr=0.01, resample=False, **kwargs):
    model = make_model()
    split = split_temporal(toy.graph, 2, 1, n_val=0, n_test=0)
    training = TrainingConfig(epochs=epochs, patience=patience, n_val=0, n_test=0,
                              resample_negatives=resample, progress=False)
    return Trainer(model, toy.graph, toy.task, split, optimizer=OptimizerConfig(lr=lr), training=training, **kwargs)


class TestLosses:
    """Test suite for the task losses"""

    def test_link_loss_at_zero_scores(self):
        """Test that zero embeddings cost ln 2 per positive and per negative"""
        h = Tensor(np.zeros((3, 2)))
        loss = link_loss(h, h, np.array([[0, 1]]), np.array([[1, 2]]))
        assert loss.item() == pytest.approx(2 * math.log(2.0))

    def test_pair_scores(self):
        """Test that pair scores are row dot products"""
        h_src = Tensor([[1.0, 2.0], [0.0, 1.0]])
        h_dst = Tensor([[3.0, 1.0]])
        assert np.array_equal(pair_scores(h_src, h_dst, [[0, 0], [1, 0]]).data, [5.0, 1.0])

    def test_link_loss_needs_positives(self):
        """Test that an empty positive set is rejected"""
        h = Tensor(np.zeros((2, 2)))
        with pytest.raises(TrainingError):
            link_loss(h, h, np.zeros((0, 2)), np.zeros((0, 2)))

    def test_classify_loss_uniform_logits(self):
        """Test ln 2 per node for two equal logits"""
        loss = classify_loss(Tensor(np.zeros((2, 2))), np.array([0, 1]))
        assert loss.item() == pytest.approx(2 * math.log(2.0))

    def test_classify_label_range(self):
        """Test that labels must index a logit column"""
        with pytest.raises(TrainingError):
            classify_loss(Tensor(np.zeros((2, 2))), np.array([0, 2]))
        with pytest.raises(DimensionError):
            classify_loss(Tensor(np.zeros((2, 2))), np.array([0]))

    def test_classify_gradient(self):
        """Test d loss / d logits = softmax - onehot"""
        logits = parameter([[0.0, 0.0]])
        backward(classify_loss(logits, np.array([1])))
        assert np.allclose(logits.grad, [[0.5, -0.5]])

    def test_regress_loss(self):
        """Test mean absolute error 1.5"""
        assert regress_loss(Tensor([1.0, -2.0]), np.array([0.0, 0.0])).item() == pytest.approx(1.5)
        with pytest.raises(DimensionError):
            regress_loss(Tensor([1.0]), np.array([0.0, 0.0]))


class TestMetrics:
    """Test suite for evaluation metrics"""

    def test_auc_matches_pairwise_count(self, rng):
        """Test the rank formula against pairwise ordering, ties included"""
        pos = np.round(rng.normal(size=17), 1)
        neg = np.round(rng.normal(size=23) - 0.3, 1)
        assert roc_auc(pos, neg) == pytest.approx(oracles.pairwise_auc(pos.tolist(), neg.tolist()))

    def test_auc_extremes(self):
        """Test perfect, inverted and tied rankings"""
        assert roc_auc([2.0, 3.0], [0.0, 1.0]) == 1.0
        assert roc_auc([0.0], [1.0]) == 0.0
        assert roc_auc([0.5], [0.5]) == 0.5

    def test_auc_needs_both_classes(self):
        """Test that an empty class is an error"""
        with pytest.raises(TrainingError):
            roc_auc([], [1.0])

    def test_average_precision(self):
        """Test AP of a ranking with one negative between two positives"""
        assert average_precision([0.9, 0.5], [0.7]) == pytest.approx((1.0 + 2 / 3) / 2)

    def test_macro_f1_with_absent_class(self):
        """Test that a class with no support and no predictions scores zero"""
        assert macro_f1(np.array([0, 0, 1]), np.array([0, 0, 1]), 3) == pytest.approx(2 / 3)

    def test_compute_metrics_keys(self):
        """Test the metric set per task kind"""
        assert set(compute_metrics("link", pos_scores=[1.0], neg_scores=[0.0])) == {"auc", "ap"}
        assert set(compute_metrics("classify", predictions=[0, 1], truth=[0, 0], num_classes=2)) == \
            {"macro_f1", "recall", "accuracy"}
        regress = compute_metrics("regress", predictions=[1.0, 3.0], truth=[0.0, 0.0])
        assert regress["mae"] == pytest.approx(2.0)
        assert regress["rmse"] == pytest.approx(math.sqrt(5.0))


class TestNegativeSampling:
    """Test suite for negative pair sampling"""

    def test_single_free_pair(self):
        """Test that the only non-positive pair is found"""
        positives = np.array([[0, 0], [0, 1], [1, 0]])
        negatives = draw_negatives(positives, 2, 2, np.random.default_rng(0), count=1)
        assert negatives.tolist() == [[1, 1]]

    def test_exhausted_space(self):
        """Test that a complete block has no negatives"""
        positives = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
        with pytest.raises(TrainingError):
            draw_negatives(positives, 2, 2, np.random.default_rng(0))

    def test_disjoint_from_positives(self, rng):
        """Test that negatives avoid positives, self pairs and repeats"""
        positives = np.unique(rng.integers(0, 30, size=(200, 2)), axis=0)
        negatives = draw_negatives(positives, 30, 30, np.random.default_rng(1), exclude_self=True)
        assert negatives.shape[0] == positives.shape[0]
        codes = set(map(tuple, positives.tolist()))
        assert not codes & set(map(tuple, negatives.tolist()))
        assert np.all(negatives[:, 0] != negatives[:, 1])
        assert len(set(map(tuple, negatives.tolist()))) == negatives.shape[0]

    def test_dense_block_enumerates(self):
        """Test that a nearly full block still yields valid negatives"""
        all_pairs = np.array([(s, d) for s in range(40) for d in range(40)])
        positives = all_pairs[3:]
        negatives = draw_negatives(positives, 40, 40, np.random.default_rng(0))
        assert sorted(map(tuple, negatives.tolist())) == [(0, 0), (0, 1), (0, 2)]

    def test_shortfall_is_reported(self):
        """Test that a nearly complete bipartite block warns when it cannot match every positive"""
        all_pairs = np.array([(s, d) for s in range(4) for d in range(3)])
        positives = all_pairs[2:]
        with patch("htgnn.services.negative_sampling.logger") as mock_logger:
            negatives = draw_negatives(positives, 4, 3, np.random.default_rng(0))
        assert sorted(map(tuple, negatives.tolist())) == [(0, 0), (0, 1)]
        mock_logger.warning.assert_called_once()
        assert "10 requested" in mock_logger.warning.call_args[0][0]

    def test_full_match_is_quiet(self, rng):
        """Test that a sparse block draws one negative per positive without warning"""
        positives = np.unique(rng.integers(0, 20, size=(30, 2)), axis=0)
        with patch("htgnn.services.negative_sampling.logger") as mock_logger:
            negatives = draw_negatives(positives, 20, 20, np.random.default_rng(0))
        assert negatives.shape[0] == positives.shape[0]
        mock_logger.warning.assert_not_called()

    def test_keyed_by_seed_epoch_and_snapshot(self, toy):
        """Test that draws repeat for equal keys and differ across epochs"""
        positives = toy.task.positives(toy.graph, 2)
        a = sample_negatives(toy.graph, toy.task, positives, 2, seed=0, epoch=1)
        b = sample_negatives(toy.graph, toy.task, positives, 2, seed=0, epoch=1)
        assert np.array_equal(a, b)
        evaluation = sample_negatives(toy.graph, toy.task, positives, 2, seed=0)
        assert np.array_equal(evaluation, sample_negatives(toy.graph, toy.task, positives, 2, seed=0))


class TestOptimizer:
    """Test suite for Adam"""

    def test_first_step(self):
        """Test that the first bias-corrected step moves by lr * g / (|g| + eps)"""
        w = parameter([0.0])
        state = adam_step({"w": w}, {"w": np.array([1.0])}, OptimState(lr=0.1))
        assert w.data[0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-15)
        assert state.step == 1

    def test_trajectory(self):
        """Test fifty steps on a quadratic against the reference recursion"""
        w = parameter([3.0])
        state = OptimState(lr=0.05, weight_decay=0.01)
        expected = oracles.adam_trajectory(3.0, lambda theta: 2.0 * theta, 50, lr=0.05, weight_decay=0.01)
        for value in expected:
            adam_step({"w": w}, {"w": 2.0 * w.data}, state)
            assert w.data[0] == pytest.approx(value, abs=1e-12)

    def test_non_finite_gradient_leaves_parameters(self):
        """Test that no parameter moves when any gradient is non-finite"""
        a, b = parameter([1.0]), parameter([2.0])
        with pytest.raises(NonFiniteError) as excinfo:
            adam_step({"a": a, "b": b}, {"a": np.array([1.0]), "b": np.array([np.nan])}, OptimState())
        assert "'b'" in str(excinfo.value)
        assert a.data[0] == 1.0 and b.data[0] == 2.0

    def test_missing_gradient_counts_as_zero(self):
        """Test that a parameter without a gradient only decays"""
        w = parameter([1.0])
        adam_step({"w": w}, {}, OptimState(lr=0.1, weight_decay=0.5))
        assert w.data[0] == pytest.approx(0.95)

    def test_frozen_parameters_are_skipped(self):
        """Test that Adam leaves frozen tensors alone"""
        store = ParamStore()
        frozen = store.add("llm.WQ", np.ones(2))
        free = store.add("head.1.b", np.ones(2))
        store.freeze("llm.")
        frozen.grad = np.ones(2)
        free.grad = np.ones(2)
        optimizer = Adam(store, lr=0.1)
        optimizer.step()
        assert np.array_equal(frozen.data, np.ones(2))
        assert np.all(free.data < 1.0)
        optimizer.zero_grad()
        assert frozen.grad is None and free.grad is None


class TestTrainer:
    """Test suite for the training loop"""

    def test_patience_stops_a_frozen_run(self, toy, make_model):
        """Test that with lr = 0 the loss never strictly improves after epoch 1"""
        report = toy_trainer(toy, make_model, epochs=10, patience=1, lr=0.0).fit()
        assert len(report.epochs) == 2
        assert report.stopped_early
        assert report.best_epoch == 1
        assert report.selection_metric == "train_loss"

    def test_loss_decreases(self, toy, make_model):
        """Test that training on the toy graph lowers the loss"""
        report = toy_trainer(toy, make_model, epochs=30, patience=30).fit()
        assert report.losses[-1] < report.losses[0]

    def test_deterministic(self, toy, make_model):
        """Test that two runs with the same seed agree exactly"""
        first = toy_trainer(toy, make_model, resample=True).fit()
        second = toy_trainer(toy, make_model, resample=True).fit()
        assert first.losses == second.losses

    def test_best_state_restored(self, toy, make_model):
        """Test that the parameters after fit are those of the best epoch"""
        trainer = toy_trainer(toy, make_model, epochs=8, patience=8)
        report = trainer.fit()
        loss = trainer.loss(trainer.split.train, epoch=0).item()
        assert report.best_value == min(report.losses)
        assert np.isfinite(loss)

    def test_split_must_match_model(self, toy, make_model):
        """Test that the split window must equal the model window"""
        split = TemporalSplit(window=1, horizon=1, train=(1,), val=(), test=(2,))
        with pytest.raises(TrainingError):
            Trainer(make_model(), toy.graph, toy.task, split)

    def test_nan_loss_reports_epoch(self, toy, make_model):
        """Test that a non-finite loss aborts with the epoch number"""
        trainer = toy_trainer(toy, make_model)
        with patch.object(trainer, "loss", return_value=Tensor(float("nan"))):
            with pytest.raises(TrainingError) as excinfo:
                trainer.train_epoch(3)
        assert excinfo.value.epoch == 3

    def test_frozen_projection(self, toy, make_model):
        """Test that the llm projection does not move when frozen"""
        trainer = toy_trainer(toy, make_model, freeze_llm_projection=True)
        before = trainer.model.params["llm.WQ"].data.copy()
        trainer.train_epoch(1)
        assert np.array_equal(trainer.model.params["llm.WQ"].data, before)

    def test_evaluation_is_repeatable(self, toy, make_model):
        """Test that evaluation negatives do not change between calls"""
        trainer = toy_trainer(toy, make_model)
        assert trainer.evaluate([2]) == trainer.evaluate([2])
        assert set(trainer.evaluate([2])) == {"auc", "ap"}
        assert trainer.evaluate([]) == {}

    def test_regression_task(self, toy, make_model):
        """Test a node regression run end to end"""
        task = TaskSpec(kind="regress", target_type="user", nodes={2: np.arange(5)},
                        values={2: np.linspace(-1.0, 1.0, 5)})
        model = make_model(task=task)
        split = split_temporal(toy.graph, 2, 1, n_val=0, n_test=0)
        trainer = Trainer(model, toy.graph, task, split, training=TrainingConfig(epochs=3, n_val=0, n_test=0,
                                                                                 progress=False))
        report = trainer.fit()
        assert len(report.epochs) == 3
        assert set(trainer.evaluate([2])) == {"mae", "rmse"}

    def test_report_frames(self, toy, make_model):
        """Test the curve and attention tables"""
        report = toy_trainer(toy, make_model, epochs=2).fit()
        assert list(report.curves_frame()["epoch"]) == [1, 2]
        attention = report.attention_frame()
        assert set(attention.columns) == {"layer", "type_name", "snapshot", "relation", "alpha", "score"}
        assert len(attention) > 0
