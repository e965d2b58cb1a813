"""
Evaluation metrics for the three task kinds.

link: AUC (rank statistic, ties get midranks) and AP (precision summed over
recall steps at every distinct threshold). classify: macro-F1, macro recall
and accuracy; a class with no support and no predictions scores 0.
regress: MAE and RMSE.
"""

from typing import Dict, Optional

import numpy as np
from scipy.stats import rankdata

from htgnn.errors import TrainingError

# Early-stopping criterion per task kind: (metric, higher is better)
SELECTION_METRIC = {"link": ("auc", True), "classify": ("macro_f1", True), "regress": ("mae", False)}


def roc_auc(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1)
    negs = np.asarray(neg_scores, dtype=np.float64).reshape(-1)
    if pos.size == 0 or negs.size == 0:
        raise TrainingError(f"AUC needs both classes, got {pos.size} positive and {negs.size} negative scores")
    ranks = rankdata(np.concatenate([pos, negs]))
    n_pos, n_neg = pos.size, negs.size
    return float((ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1)
    negs = np.asarray(neg_scores, dtype=np.float64).reshape(-1)
    if pos.size == 0:
        raise TrainingError("AP needs at least one positive score")
    scores = np.concatenate([pos, negs])
    labels = np.concatenate([np.ones(pos.size), np.zeros(negs.size)])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    last = np.r_[np.nonzero(np.diff(scores))[0], scores.size - 1]
    tps = np.cumsum(labels)[last]
    fps = last + 1 - tps
    precision = tps / (tps + fps)
    recall = tps / pos.size
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _confusion(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int):
    classes = np.arange(num_classes)
    tp = np.array([np.sum((y_true == c) & (y_pred == c)) for c in classes], dtype=np.float64)
    fp = np.array([np.sum((y_true != c) & (y_pred == c)) for c in classes], dtype=np.float64)
    fn = np.array([np.sum((y_true == c) & (y_pred != c)) for c in classes], dtype=np.float64)
    return tp, fp, fn


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    tp, fp, fn = _confusion(np.asarray(y_true), np.asarray(y_pred), num_classes)
    return float(np.mean(_safe_ratio(2 * tp, 2 * tp + fp + fn)))


def macro_recall(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    tp, _, fn = _confusion(np.asarray(y_true), np.asarray(y_pred), num_classes)
    return float(np.mean(_safe_ratio(tp, tp + fn)))


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def mae(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(y))))


def rmse(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(y)) ** 2)))


def compute_metrics(kind: str, pos_scores: Optional[np.ndarray] = None, neg_scores: Optional[np.ndarray] = None,
                    predictions: Optional[np.ndarray] = None, truth: Optional[np.ndarray] = None,
                    num_classes: Optional[int] = None) -> Dict[str, float]:
    """Metric set for one task kind

    link takes positive and negative pair scores; classify takes predicted and
    true class ids; regress takes predicted and true values.
    """
    if kind == "link":
        return {"auc": roc_auc(pos_scores, neg_scores), "ap": average_precision(pos_scores, neg_scores)}
    predictions = np.asarray(predictions).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if truth.size == 0:
        raise TrainingError(f"{kind} metrics need a non-empty evaluation set")
    if predictions.shape != truth.shape:
        raise TrainingError(f"{kind} metrics: {predictions.size} predictions for {truth.size} targets")
    if kind == "classify":
        if num_classes is None:
            raise TrainingError("classify metrics need num_classes")
        return {
            "macro_f1": macro_f1(truth, predictions, num_classes),
            "recall": macro_recall(truth, predictions, num_classes),
            "accuracy": accuracy(truth, predictions),
        }
    if kind == "regress":
        return {"mae": mae(predictions, truth), "rmse": rmse(predictions, truth)}
    raise TrainingError(f"Unknown task kind '{kind}'")
