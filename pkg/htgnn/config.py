"""
Run configuration: defaults < JSON file < --set overrides.

Every section rejects unknown keys. The effective configuration is written to
<output_dir>/config.json so a run can be repeated from that file alone.
"""

import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from htgnn.ablation.variants import VariantConfig
from htgnn.data.synthetic import SynthConfig
from htgnn.errors import ConfigError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetConfig(_Section):
    path: Optional[str] = None
    synth: Optional[SynthConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synth is None):
            raise ValueError("dataset needs exactly one of 'path' or 'synth'")
        return self


class TaskConfig(_Section):
    """Overrides the task stored with the dataset"""

    kind: Literal["link", "classify", "regress"]
    src_type: Optional[str] = None
    dst_type: Optional[str] = None
    relation: Optional[str] = None
    target_type: Optional[str] = None
    num_classes: Optional[int] = None


class ModelConfig(_Section):
    kind: Literal["htgnn", "decoupled"] = "htgnn"
    hidden_dim: int = Field(default=32, ge=1)
    heads: int = Field(default=1, ge=1)
    layers: int = Field(default=2, ge=1)
    window: int = Field(default=4, ge=1)
    horizon: int = Field(default=1, ge=1)
    sim_dim: Optional[int] = Field(default=None, ge=1)
    normalization: Literal["auto", "row", "sym"] = "auto"
    freeze_llm_projection: bool = False


class ProviderConfig(_Section):
    kind: Literal["file", "remote", "fallback"] = "fallback"
    path: Optional[str] = None
    endpoint: Optional[str] = None
    model: str = "text-embedding-3-small"
    token_env: str = "OPENAI_API_KEY"
    timeout: float = Field(default=30.0, gt=0)
    fallback_dim: int = Field(default=64, ge=1)
    seed: int = 0
    cache_dir: Optional[str] = None
    max_workers: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def _file_needs_path(self):
        if self.kind == "file" and not self.path:
            raise ValueError("file provider needs 'path'")
        return self


class OptimizerConfig(_Section):
    lr: float = Field(default=0.01, ge=0)
    weight_decay: float = Field(default=0.0, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)


class TrainingConfig(_Section):
    epochs: int = Field(default=200, ge=1)
    patience: int = Field(default=25, ge=1)
    n_val: int = Field(default=1, ge=0)
    n_test: int = Field(default=1, ge=0)
    resample_negatives: bool = True
    gradcheck_threshold: float = Field(default=1e-4, gt=0)
    gradcheck_eps: float = Field(default=1e-5, gt=0)
    gradcheck_max_coords: Optional[int] = Field(default=None, ge=1)
    gradcheck_atol: float = Field(default=0.0, ge=0)
    debug: bool = False
    progress: bool = True


class BenchConfig(_Section):
    models: List[Literal["htgnn", "decoupled"]] = Field(default_factory=lambda: ["htgnn", "decoupled"])
    grid: Dict[Literal["T", "n", "e"], List[int]] = Field(default_factory=lambda: {"T": [32, 64, 128, 256]})
    T: int = Field(default=64, ge=1)
    n: int = Field(default=64, ge=1)
    d: int = Field(default=4, ge=1)
    e: int = Field(default=2, ge=1)
    R: int = Field(default=1, ge=1)
    heads: int = Field(default=4, ge=1)
    repeats: int = Field(default=5, ge=3)

    @model_validator(mode="after")
    def _heads_divide_width(self):
        if self.d % self.heads:
            raise ValueError(f"bench heads ({self.heads}) must divide d ({self.d})")
        return self


class RunConfig(_Section):
    dataset: DatasetConfig = Field(default_factory=lambda: DatasetConfig(synth=SynthConfig(kind="toy")))
    task: Optional[TaskConfig] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    variant: VariantConfig = Field(default_factory=VariantConfig)
    provider: ProviderConfig = Field(default_factory=ProviderConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    seed: int = 0
    output_dir: str = "runs/default"


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(data: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Set a dotted key from a `key=value` string, creating sections as needed"""
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}' must look like section.key=value")
    dotted, raw = assignment.split("=", 1)
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override '{assignment}' has an empty key")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override '{assignment}': '{key}' is not a section")
        node = child
    node[keys[-1]] = _parse_value(raw)
    return data


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    data: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
    for assignment in overrides:
        apply_override(data, assignment)
    return RunConfig.model_validate(data)


def write_effective_config(config: RunConfig, out_dir: Optional[str] = None) -> str:
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(config.model_dump_json(indent=2))
    logger.info(f"Effective configuration written to {path}")
    return path
