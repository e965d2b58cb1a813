import logging
from typing import Dict, Mapping, Optional, Type

import numpy as np

from htgnn.ablation.decoupled import DecoupledBaseline
from htgnn.ablation.variants import VariantConfig
from htgnn.config import ModelConfig
from htgnn.data.graph import HTGraph
from htgnn.data.tasks import TaskSpec
from htgnn.errors import ConfigError
from htgnn.model.htgnn_model import HTGNN

logger = logging.getLogger(__name__)


class ModelFactory:
    """Builds the model kind named by the run configuration"""

    def __init__(self):
        self.model_classes: Dict[str, Type[HTGNN]] = {
            "htgnn": HTGNN,
            "decoupled": DecoupledBaseline,
        }

    def create_model(self, config: ModelConfig, graph: HTGraph, task: TaskSpec,
                     variant: Optional[VariantConfig] = None,
                     type_embeddings: Optional[Mapping[str, np.ndarray]] = None, seed: int = 0) -> HTGNN:
        if config.kind not in self.model_classes:
            raise ConfigError(f"Unknown model kind '{config.kind}', expected one of {sorted(self.model_classes)}")
        model_class = self.model_classes[config.kind]
        return model_class(
            graph,
            task,
            hidden_dim=config.hidden_dim,
            heads=config.heads,
            layers=config.layers,
            window=config.window,
            horizon=config.horizon,
            variant=variant,
            type_embeddings=type_embeddings,
            sim_dim=config.sim_dim,
            normalization=config.normalization,
            seed=seed,
        )

    @staticmethod
    def needs_embeddings(config: ModelConfig, variant: VariantConfig) -> bool:
        """Only the dynamic-state variants with llm initialization read type embeddings"""
        return config.kind == "htgnn" and variant.init == "llm" and variant.uses_initial_state


def create_model(config: ModelConfig, graph: HTGraph, task: TaskSpec, variant: Optional[VariantConfig] = None,
                 type_embeddings: Optional[Mapping[str, np.ndarray]] = None, seed: int = 0) -> HTGNN:
    return ModelFactory().create_model(config, graph, task, variant, type_embeddings, seed)
