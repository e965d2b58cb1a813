"""
Embedding table on disk: JSON mapping type name to
{dim, values, provider, prompt_hash}. An entry is reused when both the prompt
hash and the provider tag still match; writes go through a temp file and an
atomic rename.
"""

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List

import numpy as np

from htgnn.data.graph import HTGraph
from htgnn.errors import DimensionError, ProviderError
from htgnn.llm.prompt import build_prompt
from htgnn.llm.providers.base_provider import BaseEmbeddingProvider, TypeEmbedding

logger = logging.getLogger(__name__)

TABLE_NAME = "embeddings.json"


class EmbeddingStore:
    def __init__(self, path: str):
        self.path = path

    def load(self) -> Dict[str, TypeEmbedding]:
        if not os.path.exists(self.path):
            return {}
        try:
            with open(self.path, "r", encoding="utf-8") as f:
                table = json.load(f)
        except json.JSONDecodeError:
            logger.warning(f"Ignoring unreadable embedding cache {self.path}")
            return {}
        entries = {}
        for name, record in table.items():
            try:
                entries[name] = TypeEmbedding(name, np.asarray(record["values"], dtype=np.float64),
                                              record["provider"], record["prompt_hash"])
            except (KeyError, TypeError, ValueError):
                logger.warning(f"Ignoring malformed cache entry '{name}' in {self.path}")
        return entries

    def save(self, entries: Dict[str, TypeEmbedding]):
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump({name: entry.to_record() for name, entry in entries.items()}, f)
        os.replace(tmp_path, self.path)


def _fetch(provider: BaseEmbeddingProvider, prompts, names: List[str], max_workers: int) -> Dict[str, TypeEmbedding]:
    fetched = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(provider.get_type_embedding, prompts[name]): name for name in names}
        for future in as_completed(futures):
            name = futures[future]
            try:
                fetched[name] = future.result()
            except ProviderError as e:
                raise ProviderError(f"Embedding failed for type '{name}': {e}", status=e.status, type_name=name) from e
    return fetched


def embed_dataset(graph: HTGraph, provider: BaseEmbeddingProvider, cache_dir: str, max_workers: int = 4) -> str:
    """One provider call per node type missing from the cache; returns the table path"""
    store = EmbeddingStore(os.path.join(cache_dir, TABLE_NAME))
    prompts = {nt.name: build_prompt(nt) for nt in graph.node_types}
    cached = store.load()

    missing = []
    for name, prompt in prompts.items():
        entry = cached.get(name)
        if entry is not None and entry.prompt_hash == prompt.content_hash and entry.provider == provider.tag:
            continue
        if entry is not None:
            logger.warning(f"Cached embedding for '{name}' is stale, fetching again")
        missing.append(name)

    fetched = _fetch(provider, prompts, missing, max_workers) if missing else {}
    entries = {name: fetched.get(name) or cached[name] for name in prompts}
    dims = {entry.dim for entry in entries.values()}
    if len(dims) > 1:
        raise DimensionError(f"type embeddings have inconsistent dims {sorted(dims)}")
    store.save(entries)
    logger.info(f"Embedding table {store.path}: {len(missing)} fetched, {len(prompts) - len(missing)} reused")
    return store.path


def load_embeddings(path: str) -> Dict[str, np.ndarray]:
    entries = EmbeddingStore(path).load()
    if not entries:
        raise ProviderError(f"No embeddings found in {path}")
    return {name: entry.values for name, entry in entries.items()}
