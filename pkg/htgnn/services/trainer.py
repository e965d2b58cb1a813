"""
Full-graph training loop.

Each epoch sums the loss over every training target and horizon step, runs one
backward pass and one Adam step, then scores the validation targets. Training
stops after `patience` epochs without a strict improvement of the selection
metric, and the best epoch's parameters are restored before testing.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from htgnn.config import OptimizerConfig, TrainingConfig
from htgnn.core.tensor import Tensor, add, backward, debug_mode, no_grad, take_rows
from htgnn.data.graph import HTGraph
from htgnn.data.splits import TemporalSplit
from htgnn.data.tasks import TaskSpec
from htgnn.errors import NonFiniteError, TrainingError
from htgnn.model.htgnn_model import ForwardResult, HTGNN
from htgnn.services.losses import classify_loss, link_loss, pair_scores, regress_loss
from htgnn.services.metrics import SELECTION_METRIC, compute_metrics
from htgnn.services.negative_sampling import sample_negatives
from htgnn.services.optimizer import Adam

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metrics: Dict[str, float]
    wall_ms: float


@dataclass
class TrainReport:
    model_kind: str
    variant: str
    selection_metric: str
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_value: Optional[float] = None
    test_metrics: Dict[str, float] = field(default_factory=dict)
    param_count: int = 0
    total_wall_ms: float = 0.0
    stopped_early: bool = False
    split: Dict = field(default_factory=dict)
    attention: List[Dict] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [record.train_loss for record in self.epochs]

    def to_dict(self) -> Dict:
        return asdict(self)

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info(f"Train report written to {path}")

    def curves_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.epochs:
            row = {"epoch": record.epoch, "train_loss": record.train_loss, "wall_ms": record.wall_ms}
            row.update({f"val_{name}": value for name, value in record.val_metrics.items()})
            rows.append(row)
        return pd.DataFrame(rows)

    def attention_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.attention, columns=["layer", "type_name", "snapshot", "relation", "alpha", "score"])


class Trainer:
    def __init__(self, model: HTGNN, graph: HTGraph, task: TaskSpec, split: TemporalSplit,
                 optimizer: Optional[OptimizerConfig] = None, training: Optional[TrainingConfig] = None,
                 seed: int = 0, freeze_llm_projection: bool = False):
        if split.window != model.window or split.horizon != model.horizon:
            raise TrainingError(f"split (window {split.window}, horizon {split.horizon}) does not match the model "
                                f"(window {model.window}, horizon {model.horizon})")
        self.model = model
        self.graph = model.prepare(graph)
        self.task = task
        self.split = split
        self.training = training or TrainingConfig()
        self.seed = seed
        opt = optimizer or OptimizerConfig()
        if freeze_llm_projection:
            model.params.freeze("llm.")
        self.optimizer = Adam(model.params, lr=opt.lr, betas=opt.betas, eps=opt.eps, weight_decay=opt.weight_decay)
        self.metric_name, self.higher_is_better = SELECTION_METRIC[task.kind]

    # Losses

    def _negatives(self, positives: np.ndarray, snapshot: int, step: int, epoch: Optional[int]) -> np.ndarray:
        if epoch is not None and not self.training.resample_negatives:
            epoch = 0
        return sample_negatives(self.graph, self.task, positives, snapshot, self.seed, epoch=epoch, step=step)

    def _step_loss(self, result: ForwardResult, step: int, epoch: Optional[int]) -> Optional[Tensor]:
        task = self.task
        snapshot = result.target + step
        if task.kind == "link":
            positives = task.positives(self.graph, snapshot)
            if positives.shape[0] == 0:
                return None
            negatives = self._negatives(positives, snapshot, step, epoch)
            return link_loss(result.predictions[task.src_type][step], result.predictions[task.dst_type][step],
                             positives, negatives)
        nodes, values = task.labeled(snapshot)
        if nodes.shape[0] == 0:
            return None
        outputs = take_rows(result.predictions[task.target_type][step], nodes)
        if task.kind == "classify":
            return classify_loss(outputs, values)
        return regress_loss(outputs, values)

    def target_loss(self, target: int, epoch: Optional[int] = None) -> Optional[Tensor]:
        """Loss summed over the horizon steps of one target; None when no step has labels"""
        result = self.model.forward(self.graph, target)
        total = None
        for step in range(self.model.horizon):
            term = self._step_loss(result, step, epoch)
            if term is not None:
                total = term if total is None else add(total, term)
        return total

    def loss(self, targets: Sequence[int], epoch: Optional[int] = None) -> Tensor:
        total = None
        for target in targets:
            term = self.target_loss(target, epoch)
            if term is not None:
                total = term if total is None else add(total, term)
        if total is None:
            raise TrainingError(f"no labeled snapshots among targets {list(targets)}", epoch=epoch)
        return total

    def train_epoch(self, epoch: int) -> float:
        self.optimizer.zero_grad()
        loss = self.loss(self.split.train, epoch)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"training loss became {value} at epoch {epoch}", epoch=epoch)
        backward(loss)
        try:
            self.optimizer.step()
        except NonFiniteError as e:
            raise TrainingError(f"epoch {epoch}: {e}", epoch=epoch) from e
        return value

    # Evaluation

    def evaluate(self, targets: Sequence[int]) -> Dict[str, float]:
        if not targets:
            return {}
        task = self.task
        pos_scores, neg_scores, predictions, truth = [], [], [], []
        with no_grad():
            for target in targets:
                result = self.model.forward(self.graph, target)
                for step in range(self.model.horizon):
                    snapshot = target + step
                    if task.kind == "link":
                        positives = task.positives(self.graph, snapshot)
                        if positives.shape[0] == 0:
                            continue
                        negatives = self._negatives(positives, snapshot, step, None)
                        h_src = result.predictions[task.src_type][step]
                        h_dst = result.predictions[task.dst_type][step]
                        pos_scores.append(pair_scores(h_src, h_dst, positives).data)
                        neg_scores.append(pair_scores(h_src, h_dst, negatives).data)
                        continue
                    nodes, values = task.labeled(snapshot)
                    if nodes.shape[0] == 0:
                        continue
                    outputs = result.predictions[task.target_type][step].data[nodes]
                    predictions.append(outputs.argmax(axis=1) if task.kind == "classify" else outputs)
                    truth.append(values)
        if task.kind == "link":
            if not pos_scores:
                raise TrainingError(f"no positive pairs among evaluation targets {list(targets)}")
            return compute_metrics("link", pos_scores=np.concatenate(pos_scores),
                                   neg_scores=np.concatenate(neg_scores))
        if not truth:
            raise TrainingError(f"no labeled nodes among evaluation targets {list(targets)}")
        return compute_metrics(task.kind, predictions=np.concatenate(predictions), truth=np.concatenate(truth),
                               num_classes=task.num_classes)

    def attention_records(self) -> List[Dict]:
        """Relation weights of the current parameters on the last available target"""
        targets = self.split.test or self.split.val or self.split.train
        result = self.model.predict(self.graph, targets[-1])
        return [asdict(record) for record in result.attention.records]

    # Loop

    def _improved(self, value: float, best: Optional[float], higher: bool) -> bool:
        if best is None:
            return bool(np.isfinite(value))
        return value > best if higher else value < best

    def fit(self) -> TrainReport:
        cfg = self.training
        report = TrainReport(model_kind=self.model.kind, variant=self.model.variant.label,
                             selection_metric=self.metric_name, param_count=self.model.count_parameters(),
                             split=self.split.to_dict())
        use_val = bool(self.split.val)
        if not use_val:
            logger.warning("Validation split is empty; early stopping follows the training loss")
            report.selection_metric = "train_loss"
        higher = self.higher_is_better if use_val else False

        best_state = None
        bad_epochs = 0
        start = time.perf_counter()
        with debug_mode(cfg.debug):
            progress = tqdm(range(1, cfg.epochs + 1), desc=f"train {self.model.kind}", unit="epoch",
                            disable=not cfg.progress)
            for epoch in progress:
                tick = time.perf_counter()
                train_loss = self.train_epoch(epoch)
                val_metrics = self.evaluate(self.split.val) if use_val else {}
                wall_ms = (time.perf_counter() - tick) * 1000.0
                report.epochs.append(EpochRecord(epoch, train_loss, val_metrics, wall_ms))

                value = val_metrics[self.metric_name] if use_val else train_loss
                if self._improved(value, report.best_value, higher):
                    report.best_epoch, report.best_value = epoch, value
                    best_state = self.model.params.state_dict()
                    bad_epochs = 0
                else:
                    bad_epochs += 1
                progress.set_postfix(loss=f"{train_loss:.4f}", **{report.selection_metric: f"{value:.4f}"})
                logger.info(f"Epoch {epoch}: train loss {train_loss:.6f}, {report.selection_metric} {value:.6f}")
                if bad_epochs >= cfg.patience:
                    report.stopped_early = True
                    logger.info(f"Early stop at epoch {epoch}; best epoch {report.best_epoch}")
                    break

        if best_state is not None:
            self.model.params.load_state(best_state)
        report.test_metrics = self.evaluate(self.split.test)
        report.attention = self.attention_records()
        report.total_wall_ms = (time.perf_counter() - start) * 1000.0
        logger.info(f"Training finished: best epoch {report.best_epoch}, test {report.test_metrics}")
        return report
