import logging
from functools import cached_property
from typing import Iterable, Tuple

import numpy as np
import scipy.sparse as sp

from htgnn.core.tensor import Tensor, TensorLike, _result, as_tensor
from htgnn.errors import DimensionError

logger = logging.getLogger(__name__)


def _frozen(values, dtype) -> np.ndarray:
    if not isinstance(values, np.ndarray):
        values = list(values)
    array = np.array(values, dtype=dtype).reshape(-1)
    array.flags.writeable = False
    return array


class SparseMatrix:
    """Constant weighted adjacency in coordinate form

    Entries are (row, col, weight) with unique (row, col) pairs. The matrix
    never requires gradients; products with it only differentiate the dense side.
    """

    def __init__(self, rows: int, cols: int, row_index: Iterable[int] = (), col_index: Iterable[int] = (),
                 weights: Iterable[float] = ()):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_index = _frozen(row_index, np.int64)
        self.col_index = _frozen(col_index, np.int64)
        self.weights = _frozen(weights, np.float64)
        self._validate()

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries: Iterable[Tuple[int, int, float]]) -> "SparseMatrix":
        entries = list(entries)
        if not entries:
            return cls(rows, cols)
        r, c, w = zip(*entries)
        return cls(rows, cols, r, c, w)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        index = np.arange(n)
        return cls(n, n, index, index, np.ones(n))

    def _validate(self):
        if self.rows < 0 or self.cols < 0:
            raise DimensionError(f"sparse extents must be non-negative, got {self.rows}x{self.cols}")
        n = self.row_index.shape[0]
        if self.col_index.shape[0] != n or self.weights.shape[0] != n:
            raise DimensionError(
                f"sparse entry arrays disagree: {n} rows, {self.col_index.shape[0]} cols, {self.weights.shape[0]} weights"
            )
        if n == 0:
            return
        bad = (self.row_index < 0) | (self.row_index >= self.rows) | (self.col_index < 0) | (self.col_index >= self.cols)
        if bad.any():
            i = int(np.argmax(bad))
            raise DimensionError(
                f"sparse entry ({self.row_index[i]}, {self.col_index[i]}) out of bounds for {self.rows}x{self.cols}"
            )
        keys = self.row_index * max(self.cols, 1) + self.col_index
        if np.unique(keys).shape[0] != n:
            raise DimensionError("sparse matrix has duplicate (row, col) entries")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_index.shape[0])

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, (self.row_index, self.col_index)), shape=self.shape)

    @cached_property
    def csr_transposed(self) -> sp.csr_matrix:
        return self.csr.T.tocsr()

    def entries(self):
        return list(zip(self.row_index.tolist(), self.col_index.tolist(), self.weights.tolist()))

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).reshape(-1)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def spmm(adj: SparseMatrix, x: TensorLike) -> Tensor:
    """Sparse-dense product adj @ x; gradient w.r.t. x is adjᵀ @ grad"""
    x = as_tensor(x)
    if x.ndim != 2 or adj.cols != x.shape[0]:
        raise DimensionError(f"spmm shape mismatch: {adj.shape} x {x.shape}")
    if adj.nnz == 0:
        out = np.zeros((adj.rows, x.shape[1]))
    else:
        out = np.asarray(adj.csr @ x.data)
    return _result("spmm", out, (x,), lambda g: (np.asarray(adj.csr_transposed @ g),))
