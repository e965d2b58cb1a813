import logging
import os
from typing import Optional

import numpy as np
import openai

from htgnn.errors import ProviderError
from htgnn.llm.prompt import TypePrompt
from htgnn.llm.providers.base_provider import BaseEmbeddingProvider

logger = logging.getLogger(__name__)


class RemoteEmbeddingProvider(BaseEmbeddingProvider):
    """Embedding service speaking the {model, input} -> {data: [{embedding}]} API

    Failures are raised as ProviderError carrying the HTTP status; there is no
    silent fallback to another provider.
    """

    def __init__(self, model: str, endpoint: Optional[str] = None, token_env: str = "OPENAI_API_KEY",
                 timeout: float = 30.0):
        super().__init__("remote")
        self.model = model
        self.endpoint = endpoint
        token = os.environ.get(token_env)
        if not token:
            raise ProviderError(f"Remote embedding provider needs the environment variable {token_env}")
        self.client = openai.OpenAI(api_key=token, base_url=endpoint, timeout=timeout, max_retries=0)

    @property
    def tag(self) -> str:
        return f"remote:{self.model}"

    def embed(self, prompt: TypePrompt) -> np.ndarray:
        logger.info(f"Requesting embedding for type '{prompt.type_name}' from {self.endpoint or 'default endpoint'}")
        try:
            response = self.client.embeddings.create(model=self.model, input=[prompt.text])
        except openai.APIStatusError as e:
            logger.error(f"Embedding request for '{prompt.type_name}' failed with status {e.status_code}")
            raise ProviderError(f"Embedding request for '{prompt.type_name}' failed with status {e.status_code}",
                                status=e.status_code, type_name=prompt.type_name) from e
        except openai.APITimeoutError as e:
            logger.error(f"Embedding request for '{prompt.type_name}' timed out")
            raise ProviderError(f"Embedding request for '{prompt.type_name}' timed out",
                                type_name=prompt.type_name) from e
        except openai.APIConnectionError as e:
            logger.error(f"Embedding request for '{prompt.type_name}' could not connect: {e}")
            raise ProviderError(f"Embedding request for '{prompt.type_name}' could not connect: {e}",
                                type_name=prompt.type_name) from e
        if not response.data:
            raise ProviderError(f"Embedding response for '{prompt.type_name}' has no data", type_name=prompt.type_name)
        return np.asarray(response.data[0].embedding, dtype=np.float64)
