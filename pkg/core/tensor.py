"""
Differentiable arrays and the reverse-mode tape.

Every DiffValue records the primitive that produced it and its parents.
tape_backward() walks the graph in reverse topological order and fills
.grad on every reachable value. The primitive set is closed:

    add, mul, matmul, sigmoid, tanh, exp, log, abs, mean, concat, slice, softmax

Everything else (sub, sum, relu, stack, reshape-by-gather, ...) is composed
from these.
"""

import itertools
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from errors import ContractViolation

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
Operand = Union["DiffValue", ArrayLike]

_node_ids = itertools.count()


class DiffValue:
    """A float64 array with an optional gradient and its place on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: Tuple["DiffValue", ...] = (),
        _backward: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
        _op: str = "leaf",
    ):
        self.data = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        if self.data.ndim == 0:
            self.data = self.data.reshape(1)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self.op = _op
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"DiffValue(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "DiffValue":
        return DiffValue(self.data.copy())

    def backward(self) -> None:
        tape_backward(self)

    def __add__(self, other: Operand) -> "DiffValue":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "DiffValue":
        return add(self, mul(as_value(other), -1.0))

    def __rsub__(self, other: Operand) -> "DiffValue":
        return add(other, mul(self, -1.0))

    def __mul__(self, other: Operand) -> "DiffValue":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "DiffValue":
        return mul(self, -1.0)

    def __truediv__(self, other: float) -> "DiffValue":
        if isinstance(other, DiffValue):
            raise ContractViolation("division by a DiffValue is not a primitive; use mul and exp/log")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other: "DiffValue") -> "DiffValue":
        return matmul(self, other)

    def __getitem__(self, index) -> "DiffValue":
        return slice_(self, index)


def as_value(x: Operand) -> DiffValue:
    """Wrap constants; pass DiffValues through."""
    return x if isinstance(x, DiffValue) else DiffValue(np.asarray(x, dtype=np.float64))


def parameter(data: ArrayLike) -> DiffValue:
    """A trainable leaf."""
    return DiffValue(np.array(data, dtype=np.float64), requires_grad=True)


def _result(data: np.ndarray, parents: Tuple[DiffValue, ...], backward, op: str) -> DiffValue:
    if any(p.requires_grad for p in parents):
        return DiffValue(data, requires_grad=True, _parents=parents, _backward=backward, _op=op)
    return DiffValue(data, _op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Operand, b: Operand) -> DiffValue:
    a, b = as_value(a), as_value(b)
    return _result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def mul(a: Operand, b: Operand) -> DiffValue:
    a, b = as_value(a), as_value(b)
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def matmul(a: DiffValue, b: DiffValue) -> DiffValue:
    a, b = as_value(a), as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def sigmoid(x: DiffValue) -> DiffValue:
    s = special.expit(x.data)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: DiffValue) -> DiffValue:
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(x: DiffValue) -> DiffValue:
    e = np.exp(x.data)
    return _result(e, (x,), lambda g: (g * e,), "exp")


def log(x: DiffValue) -> DiffValue:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def abs_(x: DiffValue) -> DiffValue:
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def mean(x: DiffValue, axis=None, keepdims: bool = False) -> DiffValue:
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims), dtype=np.float64)
    out_shape = out.shape
    count = x.size // max(out.size, 1)

    def backward(g):
        g = g.reshape(out_shape)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _result(out.reshape(out_shape or (1,)), (x,), backward, "mean")


def concat(values: Sequence[DiffValue], axis: int = 0) -> DiffValue:
    values = [as_value(v) for v in values]
    if not values:
        raise ContractViolation("concat of an empty sequence")
    axis = axis % values[0].ndim
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(values))
        )

    return _result(np.concatenate([v.data for v in values], axis=axis), tuple(values), backward, "concat")


def _is_advanced(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def slice_(x: DiffValue, index) -> DiffValue:
    """Basic or advanced (gather) indexing; gathers with repeats accumulate."""
    out = x.data[index]
    advanced = _is_advanced(index)

    def backward(g):
        grad = np.zeros_like(x.data)
        if advanced:
            np.add.at(grad, index, g)
        else:
            grad[index] += g
        return (grad,)

    return _result(np.array(out, dtype=np.float64), (x,), backward, "slice")


def softmax(x: DiffValue, axis: int = -1) -> DiffValue:
    s = special.softmax(x.data, axis=axis)
    return _result(
        s, (x,), lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),), "softmax"
    )


# Composites


def sum_(x: DiffValue, axis=None, keepdims: bool = False) -> DiffValue:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mean(x, axis=axis, keepdims=keepdims) * float(count)


def relu(x: DiffValue) -> DiffValue:
    return (x + abs_(x)) * 0.5


def maximum(a: DiffValue, b: DiffValue) -> DiffValue:
    return (a + b + abs_(a - b)) * 0.5


def stack(values: Sequence[DiffValue], axis: int = 0) -> DiffValue:
    expanded = []
    for v in values:
        index = [slice(None)] * v.ndim
        index.insert(axis % (v.ndim + 1), None)
        expanded.append(slice_(v, tuple(index)))
    return concat(expanded, axis=axis)


def reshape(x: DiffValue, shape: Tuple[int, ...]) -> DiffValue:
    """Reshape expressed as a gather so it stays inside the primitive set."""
    flat_index = np.arange(x.size).reshape(shape)
    return slice_(x, np.unravel_index(flat_index, x.shape))


def log_sum_exp(x: DiffValue, axis: int = -1) -> DiffValue:
    shift = np.max(x.data, axis=axis, keepdims=True)
    return log(sum_(exp(x - shift), axis=axis, keepdims=True)) + shift


def _topological_order(root: DiffValue) -> List[DiffValue]:
    order: List[DiffValue] = []
    state = {}
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            state[node.node_id] = 2
            order.append(node)
            continue
        mark = state.get(node.node_id, 0)
        if mark == 2:
            continue
        if mark == 1:
            raise ContractViolation(f"graph cycle through node {node.node_id}")
        state[node.node_id] = 1
        stack_.append((node, True))
        for parent in node._parents:
            if not parent.requires_grad:
                continue
            parent_mark = state.get(parent.node_id, 0)
            if parent_mark == 1:
                raise ContractViolation(f"graph cycle through node {parent.node_id}")
            if parent_mark == 0:
                stack_.append((parent, False))
    return order


def tape_backward(loss: DiffValue) -> None:
    """
    Populate .grad with d(loss)/d(value) on every value reachable from loss.

    Gradients of the reachable set are reset first, so repeated calls
    recompute rather than accumulate.

    Raises:
        ContractViolation: If loss is not a scalar or the graph has a cycle
    """
    if loss.size != 1:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        for parent, grad in zip(node._parents, node._backward(node.grad)):
            if not parent.requires_grad or grad is None:
                continue
            grad = np.asarray(grad, dtype=np.float64).reshape(parent.shape)
            parent.grad = grad if parent.grad is None else parent.grad + grad
    for node in order:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
