from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from htgnn.errors import ProviderError
from htgnn.llm.prompt import TypePrompt


@dataclass(frozen=True)
class TypeEmbedding:
    type_name: str
    values: np.ndarray
    provider: str
    prompt_hash: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def to_record(self) -> dict:
        return {"dim": self.dim, "values": self.values.tolist(), "provider": self.provider,
                "prompt_hash": self.prompt_hash}


class BaseEmbeddingProvider(ABC):
    """Base class for all type-embedding providers"""

    def __init__(self, provider_type: str):
        self.provider_type = provider_type

    @property
    def tag(self) -> str:
        """Identifies the provider and settings that produced an embedding"""
        return self.provider_type

    def get_type_embedding(self, prompt: TypePrompt) -> TypeEmbedding:
        values = np.asarray(self.embed(prompt), dtype=np.float64).reshape(-1)
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise ProviderError(f"{self.tag} returned an empty or non-finite embedding for '{prompt.type_name}'",
                                type_name=prompt.type_name)
        return TypeEmbedding(prompt.type_name, values, self.tag, prompt.content_hash)

    @abstractmethod
    def embed(self, prompt: TypePrompt) -> np.ndarray:
        """Return the raw embedding vector for one prompt"""
        pass
