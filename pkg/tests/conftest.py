"""
Shared fixtures: the seeded toy graph, offline type embeddings and a model builder.
"""

import os

import numpy as np
import pytest

from htgnn.ablation.decoupled import DecoupledBaseline
from htgnn.ablation.variants import VariantConfig
from htgnn.data.synthetic import SynthConfig, generate_synthetic
from htgnn.llm.prompt import build_prompt
from htgnn.llm.providers.fallback_provider import FallbackEmbeddingProvider
from htgnn.model.htgnn_model import HTGNN

# The remote provider must never reach a real endpoint from the tests
os.environ.setdefault("OPENAI_API_KEY", "test-key-123")


@pytest.fixture
def toy():
    return generate_synthetic(SynthConfig(kind="toy", seed=0))


@pytest.fixture
def toy_embeddings(toy):
    provider = FallbackEmbeddingProvider(dim=8, seed=0)
    return {nt.name: provider.get_type_embedding(build_prompt(nt)).values for nt in toy.graph.node_types}


@pytest.fixture
def make_model(toy, toy_embeddings):
    """Builds a toy-sized model; keyword arguments override the defaults"""

    def build(variant=None, kind="htgnn", graph=None, task=None, **overrides):
        settings = {"hidden_dim": 4, "heads": 1, "layers": 2, "window": 2, "horizon": 1, "seed": 0}
        settings.update(overrides)
        model_class = DecoupledBaseline if kind == "decoupled" else HTGNN
        return model_class(graph or toy.graph, task or toy.task, variant=variant or VariantConfig(),
                           type_embeddings=toy_embeddings, **settings)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(0)
