from typing import Optional


class HTGError(Exception):
    """Base class for every error raised by the engine"""


class DimensionError(HTGError, ValueError):
    """Tensor or matrix extents do not line up"""


class GradientError(HTGError):
    """Backward pass requested on something that cannot be differentiated"""


class NonFiniteError(HTGError, FloatingPointError):
    """NaN or Inf detected in values, gradients or function evaluations"""


class DatasetError(HTGError):
    """Dataset manifest, files or graph structure are invalid"""


class SplitError(DatasetError):
    """Not enough snapshots for the requested temporal split"""


class ModelError(HTGError):
    """Model construction or forward pass failed"""


class ProviderError(HTGError):
    """Embedding provider failed to return a usable vector"""

    def __init__(self, message: str, status: Optional[int] = None, type_name: Optional[str] = None):
        super().__init__(message)
        self.status = status
        self.type_name = type_name


class ConfigError(HTGError):
    """Run configuration is invalid"""


class TrainingError(HTGError):
    """Training aborted"""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class BenchmarkError(HTGError):
    """Benchmark grid or measurement is unusable"""
