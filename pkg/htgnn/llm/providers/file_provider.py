import json
import logging
import os

import numpy as np

from htgnn.errors import ProviderError
from htgnn.llm.prompt import TypePrompt
from htgnn.llm.providers.base_provider import BaseEmbeddingProvider

logger = logging.getLogger(__name__)


class FileEmbeddingProvider(BaseEmbeddingProvider):
    """Looks embeddings up by type name in a precomputed JSON table

    Accepts `{type: {"values": [...]}}` (the embedding table format) or `{type: [...]}`.
    """

    def __init__(self, path: str):
        super().__init__("file")
        self.path = path
        self.table = self._load_table(path)

    def _load_table(self, path: str) -> dict:
        if not os.path.exists(path):
            logger.error(f"Embedding table not found: {path}")
            raise ProviderError(f"Embedding table not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                table = json.load(f)
        except json.JSONDecodeError as e:
            raise ProviderError(f"Embedding table {path} is not valid JSON: {e}") from e
        if not isinstance(table, dict):
            raise ProviderError(f"Embedding table {path} must map type names to vectors")
        return table

    def embed(self, prompt: TypePrompt) -> np.ndarray:
        if prompt.type_name not in self.table:
            raise ProviderError(f"Embedding table {self.path} has no entry for type '{prompt.type_name}'",
                                type_name=prompt.type_name)
        entry = self.table[prompt.type_name]
        values = entry.get("values") if isinstance(entry, dict) else entry
        if not isinstance(values, list):
            raise ProviderError(f"Embedding table {self.path}: entry '{prompt.type_name}' has no value list",
                                type_name=prompt.type_name)
        return np.asarray(values, dtype=np.float64)
