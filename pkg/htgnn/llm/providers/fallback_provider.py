"""
Offline pseudo-embeddings that are identical on every platform.

The prompt bytes are hashed with 64-bit FNV-1a, XORed with the configured seed
and used to seed SplitMix64. Uniforms take the top 53 bits of each draw, and
Box-Muller turns pairs of uniforms into Gaussians. The vector is scaled to unit
length. These vectors carry no semantics; they only make the pipeline runnable
without a language model.
"""

import logging
import math

import numpy as np

from htgnn.llm.prompt import TypePrompt
from htgnn.llm.providers.base_provider import BaseEmbeddingProvider

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    value = FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & MASK64
    return value


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) from the top 53 bits"""
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def gaussians(self, count: int) -> np.ndarray:
        values = []
        while len(values) < count:
            u1 = 1.0 - self.uniform()
            u2 = self.uniform()
            radius = math.sqrt(-2.0 * math.log(u1))
            values.append(radius * math.cos(2.0 * math.pi * u2))
            values.append(radius * math.sin(2.0 * math.pi * u2))
        return np.array(values[:count], dtype=np.float64)


class FallbackEmbeddingProvider(BaseEmbeddingProvider):
    def __init__(self, dim: int = 64, seed: int = 0):
        super().__init__("fallback")
        self.dim = dim
        self.seed = seed

    @property
    def tag(self) -> str:
        return f"fallback:{self.dim}:{self.seed}"

    def embed(self, prompt: TypePrompt) -> np.ndarray:
        generator = SplitMix64(fnv1a_64(prompt.text.encode("utf-8")) ^ (self.seed & MASK64))
        vector = generator.gaussians(self.dim)
        return vector / np.linalg.norm(vector)
