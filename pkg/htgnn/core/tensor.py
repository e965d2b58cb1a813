"""
Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends a Node stamped with a global sequence
number. Backward collects the nodes reachable from the loss and replays them
in reverse append order, which is a valid reverse topological order because
inputs are always recorded before the outputs that consume them.
"""

import itertools
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from htgnn.errors import DimensionError, GradientError, NonFiniteError

logger = logging.getLogger(__name__)

LEAKY_RELU_SLOPE = 0.01
ACTIVATIONS = ("elu", "sigmoid", "tanh", "leaky_relu")

_sequence = itertools.count()
_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def _debug_enabled() -> bool:
    return getattr(_state, "debug", False)


@contextmanager
def no_grad():
    """Evaluate without recording operations (evaluation, grad checks)"""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def debug_mode(enabled: bool = True):
    """Raise NonFiniteError as soon as an operation produces NaN or Inf"""
    previous = _debug_enabled()
    _state.debug = enabled
    try:
        yield
    finally:
        _state.debug = previous


@dataclass(eq=False)
class Node:
    seq: int
    kind: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class CompGraph:
    """Recorded operations leading to one output, in append order"""

    def __init__(self, nodes: List[Node]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: "Tensor") -> "CompGraph":
        found: Dict[int, Node] = {}
        stack = [output]
        while stack:
            node = stack.pop()._node
            if node is None or node.seq in found:
                continue
            found[node.seq] = node
            stack.extend(node.inputs)
        return cls([found[seq] for seq in sorted(found)])

    def __len__(self) -> int:
        return len(self.nodes)

    def kinds(self) -> List[str]:
        return [node.kind for node in self.nodes]


class Tensor:
    """Row-major float64 array with optional gradient tracking"""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, copy: bool = True):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[Node] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


TensorLike = Union[Tensor, np.ndarray, float, int, Sequence]


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), copy=False)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), copy=False)


def _result(kind: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data, copy=False)
    if _debug_enabled() and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"{kind} produced non-finite values")
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(next(_sequence), kind, tuple(inputs), out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(kind: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{kind} shape mismatch: {a.shape} vs {b.shape}") from None


# Elementwise arithmetic

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _result("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    return _result("div", a.data / b.data, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def power(a: TensorLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _result("pow", a.data ** exponent, (a,),
                   lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _result("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tabs(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _result("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


# Linear algebra and reductions

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product; 3-D operands are treated as batches of matrices"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise DimensionError(f"matmul batch mismatch: {a.shape} x {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("matmul", a.data @ b.data, (a, b), backward)


def tsum(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if a.size == 0:
        raise DimensionError(f"mean of an empty tensor {a.shape}")
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: TensorLike, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} into {tuple(shape)}") from None
    return _result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: TensorLike, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _result("swapaxes", np.swapaxes(a.data, axis1, axis2).copy(), (a,),
                   lambda g: (np.swapaxes(g, axis1, axis2),))


def transpose(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {a.shape}")
    return swapaxes(a, 0, 1)


def broadcast_to(a: TensorLike, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise DimensionError(f"cannot broadcast {a.shape} to {tuple(shape)}") from None
    return _result("broadcast", out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def getitem(a: TensorLike, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result("getitem", np.array(a.data[index]), (a,), backward)


def take_rows(a: TensorLike, rows) -> Tensor:
    """Gather rows by index; repeated indices scatter-add their gradients"""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= a.shape[0]):
        raise DimensionError(f"row index out of range for tensor {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        return (full,)

    return _result("take_rows", a.data[rows], (a,), backward)


def scatter_rows(values: TensorLike, index, n_rows: int) -> Tensor:
    """Sum rows of `values` into `n_rows` buckets selected by `index`"""
    values = as_tensor(values)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != values.shape[0]:
        raise DimensionError(f"scatter index length {index.shape[0]} vs values {values.shape}")
    out = np.zeros((n_rows,) + values.shape[1:])
    np.add.at(out, index, values.data)
    return _result("scatter_rows", out, (values,), lambda g: (g[index],))


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack of an empty sequence")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack shape mismatch: {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)
    return _result("stack", out, tensors,
                   lambda g: [np.take(g, i, axis=axis) for i in range(len(tensors))])


def concat(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}") from None
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result("concat", out, tensors, lambda g: np.split(g, offsets, axis=axis))


# Activations

def elu(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    negative = np.expm1(np.minimum(x.data, 0.0))
    out = np.where(x.data >= 0, x.data, negative)
    return _result("elu", out, (x,), lambda g: (g * np.where(x.data >= 0, 1.0, negative + 1.0),))


def sigmoid(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return _result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _result("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def leaky_relu(x: TensorLike, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    x = as_tensor(x)
    out = np.where(x.data >= 0, x.data, slope * x.data)
    return _result("leaky_relu", out, (x,), lambda g: (g * np.where(x.data >= 0, 1.0, slope),))


def activation(kind: str, x: TensorLike) -> Tensor:
    if kind == "elu":
        return elu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "leaky_relu":
        return leaky_relu(x)
    raise ValueError(f"Unknown activation '{kind}', expected one of {ACTIVATIONS}")


def log_sigmoid(x: TensorLike) -> Tensor:
    """log(sigmoid(x)) without overflow for large |x|"""
    x = as_tensor(x)
    return _result("log_sigmoid", -np.logaddexp(0.0, -x.data), (x,),
                   lambda g: (g * expit(-x.data),))


def softmax(v: TensorLike, axis: int = -1) -> Tensor:
    v = as_tensor(v)
    if v.size == 0 or v.ndim == 0:
        raise DimensionError(f"softmax needs at least one entry, got shape {v.shape}")
    shifted = v.data - np.max(v.data, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / np.sum(ex, axis=axis, keepdims=True)
    return _result("softmax", out, (v,),
                   lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def log_softmax(v: TensorLike, axis: int = -1) -> Tensor:
    v = as_tensor(v)
    if v.size == 0 or v.ndim == 0:
        raise DimensionError(f"log_softmax needs at least one entry, got shape {v.shape}")
    shifted = v.data - np.max(v.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    return _result("log_softmax", out, (v,),
                   lambda g: (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),))


def segment_softmax(scores: TensorLike, index, n_segments: int) -> Tensor:
    """Softmax of 1-D scores within groups sharing the same index"""
    scores = as_tensor(scores)
    index = np.asarray(index, dtype=np.int64)
    if scores.ndim != 1 or index.shape != scores.shape:
        raise DimensionError(f"segment_softmax expects matching 1-D inputs, got {scores.shape} and {index.shape}")
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, index, scores.data)
    ex = np.exp(scores.data - seg_max[index]) if index.size else np.zeros(0)
    seg_sum = np.zeros(n_segments)
    np.add.at(seg_sum, index, ex)
    out = ex / seg_sum[index] if index.size else ex

    def backward(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, index, g * out)
        return (out * (g - dot[index]),)

    return _result("segment_softmax", out, (scores,), backward)


# Backward pass

def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into every tracked leaf's .grad

    Returns the gradient contributed by this call for each reached leaf.
    """
    if loss.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("backward called on a detached tensor")

    contributions: Dict[Tensor, np.ndarray] = {}

    def accumulate(leaf: Tensor, grad: np.ndarray):
        if _debug_enabled() and not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for {leaf!r}")
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad
        contributions[leaf] = contributions[leaf] + grad if leaf in contributions else grad.copy()

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        accumulate(loss, seed)
        return contributions

    pending: Dict[int, np.ndarray] = {id(loss): seed}
    for node in reversed(CompGraph.trace(loss).nodes):
        grad = pending.pop(id(node.output), None)
        if grad is None:
            continue
        for tensor, input_grad in zip(node.inputs, node.backward(grad)):
            if input_grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                accumulate(tensor, input_grad)
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + input_grad
            else:
                pending[id(tensor)] = input_grad
    return contributions


def zero_grad(tensors) -> None:
    for tensor in tensors:
        tensor.grad = None
