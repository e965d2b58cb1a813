"""
Wall-clock scaling benchmark.

Each grid cell builds a random single-type graph with R relations of average
in-degree e and T + 1 snapshots, then times training epochs (forward, backward
and one Adam step on the single target whose window covers the first T
snapshots). One warm-up epoch is discarded and the median of the remaining
timings is reported. Scaling exponents are least-squares slopes in log-log
space along every swept axis. Cells run one after another; the BLAS thread count
is pinned by the command-line entry and recorded with the results.
"""

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from htgnn.ablation.variants import VariantConfig
from htgnn.config import BenchConfig, ModelConfig, OptimizerConfig, TrainingConfig
from htgnn.data.graph import HTGraph, NodeType, RelationType, build_graph
from htgnn.data.splits import TemporalSplit
from htgnn.data.tasks import TaskSpec
from htgnn.errors import BenchmarkError
from htgnn.model.model_factory import ModelFactory
from htgnn.services.trainer import Trainer

logger = logging.getLogger(__name__)

MIN_EPOCH_MS = 1.0
BENCH_COLUMNS = ["model", "T", "n", "R", "e", "d", "params", "epoch_ms_median", "repeats"]
# Initial coefficients that need no type embeddings
BENCH_VARIANT = VariantConfig(init="average")


@dataclass
class BenchCell:
    model: str
    T: int
    n: int
    R: int
    e: int
    d: int
    params: int
    epoch_ms_median: float
    repeats: int
    axis: str = ""
    timings_ms: List[float] = field(default_factory=list)


@dataclass
class BenchResult:
    cells: List[BenchCell] = field(default_factory=list)
    exponents: Dict[str, Dict[str, float]] = field(default_factory=dict)
    threads: str = "unset"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(cell) for cell in self.cells], columns=BENCH_COLUMNS)

    def summary(self) -> Dict:
        return {
            "exponents": self.exponents,
            "omp_num_threads": self.threads,
            "cells": [asdict(cell) for cell in self.cells],
        }

    def save(self, out_dir: str) -> Tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "bench.csv")
        json_path = os.path.join(out_dir, "bench.json")
        self.to_frame().to_csv(csv_path, index=False)
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2)
        logger.info(f"Benchmark results written to {csv_path} and {json_path}")
        return csv_path, json_path


def bench_graph(T: int, n: int, e: int, d: int, R: int, seed: int = 0) -> Tuple[HTGraph, TaskSpec]:
    """Single node type, R random relations, T + 1 snapshots, regression labels on the last"""
    rng = np.random.default_rng([seed, T, n, e, d, R])
    node_type = NodeType("node", n, d)
    relations = [RelationType(f"r{i}", "node", "node") for i in range(R)]
    edges, features = [], []
    for _ in range(T + 1):
        snapshot = {}
        for rel in relations:
            dst = np.repeat(np.arange(n, dtype=np.int64), e)
            src = rng.integers(0, n, size=n * e, dtype=np.int64)
            snapshot[rel.key] = np.unique(np.stack([src, dst], axis=1), axis=0)
        edges.append(snapshot)
        features.append({"node": rng.normal(size=(n, d))})
    graph = build_graph([node_type], relations, edges, features)
    task = TaskSpec(kind="regress", target_type="node",
                    nodes={T: np.arange(n, dtype=np.int64)}, values={T: rng.normal(size=n)})
    return graph, task


def fit_exponent(xs, ys) -> float:
    """Slope of log(ys) against log(xs)"""
    return float(np.polyfit(np.log(np.asarray(xs, dtype=np.float64)), np.log(np.asarray(ys, dtype=np.float64)), 1)[0])


def time_cell(kind: str, T: int, n: int, e: int, d: int, R: int, repeats: int, seed: int = 0,
              heads: int = 1) -> BenchCell:
    graph, task = bench_graph(T, n, e, d, R, seed)
    model_cfg = ModelConfig(kind=kind, hidden_dim=d, heads=heads, layers=1, window=T, horizon=1)
    model = ModelFactory().create_model(model_cfg, graph, task, variant=BENCH_VARIANT, seed=seed)
    split = TemporalSplit(window=T, horizon=1, train=(T,), val=(), test=())
    trainer = Trainer(model, graph, task, split, optimizer=OptimizerConfig(),
                      training=TrainingConfig(progress=False), seed=seed)

    trainer.train_epoch(0)
    timings = []
    for epoch in range(1, repeats + 1):
        tick = time.perf_counter()
        trainer.train_epoch(epoch)
        timings.append((time.perf_counter() - tick) * 1000.0)
    median = float(np.median(timings))
    if median < MIN_EPOCH_MS:
        raise BenchmarkError(f"{kind} epoch at T={T}, n={n}, e={e} took {median:.3f} ms, below the "
                             f"{MIN_EPOCH_MS} ms timer floor; enlarge the instance")
    logger.info(f"Bench {kind} T={T} n={n} e={e} d={d} R={R}: {median:.2f} ms/epoch, "
                f"{model.count_parameters()} parameters")
    return BenchCell(kind, T, n, R, e, d, model.count_parameters(), median, repeats, timings_ms=timings)


def bench_scaling(config: BenchConfig, seed: int = 0) -> BenchResult:
    for axis, values in config.grid.items():
        if len(set(values)) < 3:
            raise BenchmarkError(f"grid axis '{axis}' needs at least 3 distinct points, got {values}")
    threads = os.environ.get("OMP_NUM_THREADS", "unset")
    if threads == "unset":
        logger.warning("OMP_NUM_THREADS is not set; BLAS may use every core and skew the timings")
    result = BenchResult(threads=threads)
    base = {"T": config.T, "n": config.n, "e": config.e}
    for kind in config.models:
        result.exponents[kind] = {}
        for axis, values in config.grid.items():
            cells = []
            for value in sorted(set(values)):
                point = {**base, axis: value}
                cell = time_cell(kind, point["T"], point["n"], point["e"], config.d, config.R, config.repeats, seed,
                                 heads=config.heads)
                cell.axis = axis
                cells.append(cell)
            result.cells.extend(cells)
            result.exponents[kind][axis] = fit_exponent([getattr(c, axis) for c in cells],
                                                        [c.epoch_ms_median for c in cells])
            logger.info(f"{kind}: fitted {axis}-exponent {result.exponents[kind][axis]:.3f}")
    return result
