"""
Experiment pipeline: one RunConfig in, run artifacts out.

Every command resolves the dataset (loaded from disk or synthesized), the task,
the type embeddings when the variant needs them, and the model, then writes its
results under the output directory next to the effective configuration.
"""

import json
import logging
import os
from dataclasses import replace
from typing import Dict, Optional, Tuple

import numpy as np

from htgnn.ablation.bench import BenchResult, bench_scaling
from htgnn.config import RunConfig, write_effective_config
from htgnn.core.gradcheck import grad_check_groups
from htgnn.data.dataset_parser import load_dataset, load_task, resolve_manifest, write_dataset
from htgnn.data.graph import HTGraph
from htgnn.data.splits import TemporalSplit, split_temporal
from htgnn.data.synthetic import SyntheticHTG, generate_synthetic
from htgnn.data.tasks import TaskSpec
from htgnn.errors import ConfigError, ModelError
from htgnn.llm.embedding_store import embed_dataset, load_embeddings
from htgnn.llm.providers.provider_factory import create_provider
from htgnn.model.model_factory import ModelFactory
from htgnn.model.params import load_checkpoint
from htgnn.model.htgnn_model import HTGNN
from htgnn.services.trainer import Trainer, TrainReport

logger = logging.getLogger(__name__)

ARTIFACTS = {
    "config": "config.json",
    "report": "report.json",
    "checkpoint": "checkpoint.bin",
    "curves": "curves.csv",
    "attention": "attention.csv",
    "metrics": "metrics.json",
    "gradcheck": "gradcheck.json",
    "dataset": "dataset",
}


class ExperimentPipeline:
    def __init__(self, config: RunConfig, out_dir: Optional[str] = None):
        self.config = config
        self.out_dir = out_dir or config.output_dir
        self.model_factory = ModelFactory()
        self._data: Optional[Tuple[HTGraph, TaskSpec]] = None
        self.synthetic: Optional[SyntheticHTG] = None

    def artifact(self, name: str) -> str:
        return os.path.join(self.out_dir, ARTIFACTS[name])

    # Inputs

    def load_data(self) -> Tuple[HTGraph, TaskSpec]:
        if self._data is not None:
            return self._data
        source = self.config.dataset
        if source.synth is not None:
            self.synthetic = generate_synthetic(source.synth)
            graph, task = self.synthetic.graph, self.synthetic.task
        else:
            manifest, _ = resolve_manifest(source.path)
            graph = load_dataset(manifest)
            task = load_task(manifest, graph)
        self._data = (graph, self._apply_task_override(graph, task))
        return self._data

    def _apply_task_override(self, graph: HTGraph, task: Optional[TaskSpec]) -> TaskSpec:
        override = self.config.task
        if override is None:
            if task is None:
                raise ConfigError("dataset has no task block and the config names no task")
            return task
        fields = override.model_dump(exclude_none=True)
        if task is not None and task.kind == override.kind:
            task = replace(task, **fields)
        else:
            task = TaskSpec(**fields)
        task.validate(graph)
        return task

    def type_embeddings(self, graph: HTGraph) -> Optional[Dict[str, np.ndarray]]:
        if not self.model_factory.needs_embeddings(self.config.model, self.config.variant):
            return None
        return load_embeddings(self._embed(graph))

    def _embed(self, graph: HTGraph) -> str:
        provider_cfg = self.config.provider
        cache_dir = provider_cfg.cache_dir or self.out_dir
        provider = create_provider(provider_cfg)
        return embed_dataset(graph, provider, cache_dir, max_workers=provider_cfg.max_workers)

    def build_model(self, graph: HTGraph, task: TaskSpec) -> HTGNN:
        return self.model_factory.create_model(self.config.model, graph, task, variant=self.config.variant,
                                               type_embeddings=self.type_embeddings(graph), seed=self.config.seed)

    def split(self, graph: HTGraph) -> TemporalSplit:
        model_cfg, training = self.config.model, self.config.training
        return split_temporal(graph, model_cfg.window, model_cfg.horizon, n_val=training.n_val,
                              n_test=training.n_test)

    def trainer(self, model: HTGNN, graph: HTGraph, task: TaskSpec, split: TemporalSplit) -> Trainer:
        return Trainer(model, graph, task, split, optimizer=self.config.optimizer, training=self.config.training,
                       seed=self.config.seed, freeze_llm_projection=self.config.model.freeze_llm_projection)

    # Commands

    def synth(self) -> str:
        if self.config.dataset.synth is None:
            raise ConfigError("synth needs dataset.synth in the configuration")
        write_effective_config(self.config, self.out_dir)
        graph, task = self.load_data()
        return write_dataset(graph, self.artifact("dataset"), task)

    def embed(self) -> str:
        write_effective_config(self.config, self.out_dir)
        graph, _ = self.load_data()
        return self._embed(graph)

    def train(self) -> TrainReport:
        write_effective_config(self.config, self.out_dir)
        graph, task = self.load_data()
        split = self.split(graph)
        model = self.build_model(graph, task)
        report = self.trainer(model, graph, task, split).fit()

        model.params.save(self.artifact("checkpoint"))
        report.save(self.artifact("report"))
        report.curves_frame().to_csv(self.artifact("curves"), index=False)
        report.attention_frame().to_csv(self.artifact("attention"), index=False)
        logger.info(f"Training artifacts written to {self.out_dir}")
        return report

    def evaluate(self, checkpoint: str) -> Dict[str, Dict[str, float]]:
        write_effective_config(self.config, self.out_dir)
        graph, task = self.load_data()
        split = self.split(graph)
        model = self.build_model(graph, task)
        model.params.load_state(load_checkpoint(checkpoint))
        trainer = self.trainer(model, graph, task, split)
        metrics = {"val": trainer.evaluate(split.val), "test": trainer.evaluate(split.test)}
        with open(self.artifact("metrics"), "w", encoding="utf-8") as f:
            json.dump(metrics, f, indent=2)
        logger.info(f"Evaluated {checkpoint}: {metrics}")
        return metrics

    def gradcheck(self) -> Dict[str, float]:
        """Max relative error per parameter group on the last legal target"""
        write_effective_config(self.config, self.out_dir)
        graph, task = self.load_data()
        model = self.build_model(graph, task)
        target = graph.T - model.horizon
        if target < model.window:
            raise ModelError(f"no legal target: window {model.window} + horizon {model.horizon} > T = {graph.T}")
        split = TemporalSplit(window=model.window, horizon=model.horizon, train=(target,), val=(), test=())
        trainer = self.trainer(model, graph, task, split)
        training = self.config.training

        def loss_fn(params):
            return trainer.loss([target])

        errors = grad_check_groups(loss_fn, model.params.groups(), eps=training.gradcheck_eps,
                                   max_coords=training.gradcheck_max_coords, seed=self.config.seed,
                                   atol=training.gradcheck_atol)
        result = {
            "target": target,
            "threshold": training.gradcheck_threshold,
            "groups": errors,
            "max_error": max(errors.values()) if errors else 0.0,
        }
        with open(self.artifact("gradcheck"), "w", encoding="utf-8") as f:
            json.dump(result, f, indent=2)
        return errors

    def bench(self) -> BenchResult:
        write_effective_config(self.config, self.out_dir)
        result = bench_scaling(self.config.bench, seed=self.config.seed)
        result.save(self.out_dir)
        return result

