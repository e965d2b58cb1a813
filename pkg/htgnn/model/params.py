"""
Named parameter storage and the binary checkpoint format.

Checkpoint layout (little-endian): magic b"HTGNNCKP", uint32 version,
uint32 tensor count, then per tensor uint16 name length, UTF-8 name,
uint8 ndim, uint32 extents and the float64 row-major payload.
"""

import logging
import os
import struct
import tempfile
from typing import Dict, Iterator, List, Optional, Set, Tuple

import numpy as np

from htgnn.core.tensor import Tensor, parameter
from htgnn.errors import ModelError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HTGNNCKP"
CHECKPOINT_VERSION = 1

# Prefixes whose groups are split per layer and relation
_PER_RELATION = ("gru", "lstm", "gate", "selfatt", "gcn", "gat")


def group_of(name: str) -> str:
    """Parameter group used for gradient checks, e.g. gru.0.<relation>"""
    parts = name.split(".")
    if parts[0] in _PER_RELATION and len(parts) >= 3:
        return ".".join(parts[:3])
    return parts[0]


class ParamStore:
    """Ordered name -> Tensor mapping; insertion order is the checkpoint order"""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self.frozen: Set[str] = set()

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ModelError(f"Duplicate parameter name '{name}'")
        tensor = parameter(data, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._params:
            raise ModelError(f"Unknown parameter '{name}'")
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def trainable(self) -> List[Tuple[str, Tensor]]:
        return [(name, p) for name, p in self._params.items() if name not in self.frozen]

    def freeze(self, prefix: str):
        names = [name for name in self._params if name.startswith(prefix)]
        self.frozen.update(names)
        if names:
            logger.info(f"Froze {len(names)} parameters under '{prefix}'")

    def count(self, prefix: Optional[str] = None) -> int:
        return int(sum(p.size for name, p in self._params.items() if prefix is None or name.startswith(prefix)))

    def groups(self) -> Dict[str, List[Tensor]]:
        grouped: Dict[str, List[Tensor]] = {}
        for name, tensor in self._params.items():
            grouped.setdefault(group_of(name), []).append(tensor)
        return grouped

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state: Dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ModelError(f"State mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, values in state.items():
            target = self._params[name]
            if values.shape != target.shape:
                raise ModelError(f"Parameter '{name}' has shape {target.shape}, state has {values.shape}")
            target.data = np.array(values, dtype=np.float64)

    def save(self, path: str):
        save_checkpoint(self.state_dict(), path)

    def load(self, path: str):
        self.load_state(load_checkpoint(path))


def save_checkpoint(state: Dict[str, np.ndarray], path: str):
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(state))]
    for name, values in state.items():
        encoded = name.encode("utf-8")
        values = np.ascontiguousarray(values, dtype="<f8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes())
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp_path, path)
    logger.info(f"Checkpoint written: {path} ({len(state)} tensors)")


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise ModelError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ModelError(f"{path} is not a checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    try:
        version, count = struct.unpack_from("<II", blob, offset)
        offset += 8
        if version != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {version}")
        state = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape)
            offset += 8 * size
            state[name] = values.astype(np.float64)
    except (struct.error, ValueError) as e:
        raise ModelError(f"{path}: truncated checkpoint ({e})") from e
    return state
