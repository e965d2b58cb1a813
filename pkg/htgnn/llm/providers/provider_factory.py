import logging

from htgnn.config import ProviderConfig
from htgnn.errors import ConfigError
from htgnn.llm.providers.base_provider import BaseEmbeddingProvider
from htgnn.llm.providers.fallback_provider import FallbackEmbeddingProvider
from htgnn.llm.providers.file_provider import FileEmbeddingProvider
from htgnn.llm.providers.remote_provider import RemoteEmbeddingProvider

logger = logging.getLogger(__name__)


class ProviderFactory:
    """Builds the embedding provider named by the run configuration"""

    def __init__(self):
        self.builders = {
            "file": self._file,
            "remote": self._remote,
            "fallback": self._fallback,
        }

    def create_provider(self, config: ProviderConfig) -> BaseEmbeddingProvider:
        if config.kind not in self.builders:
            raise ConfigError(f"Unknown provider kind '{config.kind}'")
        provider = self.builders[config.kind](config)
        logger.info(f"Using embedding provider {provider.tag}")
        return provider

    @staticmethod
    def _file(config: ProviderConfig) -> BaseEmbeddingProvider:
        return FileEmbeddingProvider(config.path)

    @staticmethod
    def _remote(config: ProviderConfig) -> BaseEmbeddingProvider:
        return RemoteEmbeddingProvider(config.model, endpoint=config.endpoint, token_env=config.token_env,
                                       timeout=config.timeout)

    @staticmethod
    def _fallback(config: ProviderConfig) -> BaseEmbeddingProvider:
        return FallbackEmbeddingProvider(dim=config.fallback_dim, seed=config.seed)


def create_provider(config: ProviderConfig) -> BaseEmbeddingProvider:
    return ProviderFactory().create_provider(config)
