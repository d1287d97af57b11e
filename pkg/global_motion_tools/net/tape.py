"""
Minimal reverse-mode differentiation on numpy arrays.

A Tape records every operation whose inputs include at least one Node. Nodes
are appended in creation order, so walking the record backwards visits them in
reverse topological order. Operations called on plain arrays skip the tape and
return arrays, which lets the same model and loss code serve both training
(with gradients) and inference (without).

    tape = Tape()
    w = tape.variable(np.ones((3, 2)), name="w")
    loss = ops.sum(ops.square(x @ w))
    grads = tape.backward(loss)
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import TypeAlias

from ..errors import InvalidInputError, ShapeMismatchError
from ..rot3 import SMALL_ANGLE, aa_to_mat, skew, vee, wrap_aa as _wrap_aa_array

__all__ = [
    "Tape",
    "Node",
    "ArrayLike",
    "value_of",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "sigmoid",
    "tanh",
    "square",
    "absolute",
    "sum",
    "reshape",
    "swapaxes",
    "concat",
    "stack",
    "getitem",
    "rodrigues",
    "geodesic_sq",
    "wrap_aa",
]

BackwardFn = Callable[..., Tuple[Optional[np.ndarray], ...]]


class Node:
    """A value recorded on a tape."""

    # Make numpy defer to Node's reflected operators (ndarray + Node -> Node.__radd__)
    __array_ufunc__ = None

    def __init__(
        self,
        tape: "Tape",
        value: np.ndarray,
        parents: Tuple["Node", ...] = (),
        inputs: Tuple[np.ndarray, ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        name: Optional[str] = None,
    ):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.name = name
        self.index = len(tape.nodes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape}, index={self.index})"

    def __add__(self, other: "ArrayLike") -> "Node":
        return add(self, other)

    def __radd__(self, other: "ArrayLike") -> "Node":
        return add(other, self)

    def __sub__(self, other: "ArrayLike") -> "Node":
        return sub(self, other)

    def __rsub__(self, other: "ArrayLike") -> "Node":
        return sub(other, self)

    def __mul__(self, other: "ArrayLike") -> "Node":
        return mul(self, other)

    def __rmul__(self, other: "ArrayLike") -> "Node":
        return mul(other, self)

    def __neg__(self) -> "Node":
        return neg(self)

    def __matmul__(self, other: "ArrayLike") -> "Node":
        return matmul(self, other)

    def __rmatmul__(self, other: "ArrayLike") -> "Node":
        return matmul(other, self)

    def __getitem__(self, index) -> "Node":
        return getitem(self, index)


ArrayLike: TypeAlias = Union[Node, np.ndarray, float]


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.variables: Dict[str, Node] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def variable(self, value: np.ndarray, name: Optional[str] = None) -> Node:
        """Register a leaf whose gradient backward() reports; named leaves are also kept by name."""
        node = Node(self, np.asarray(value, dtype=np.float64), name=name)
        self.nodes.append(node)
        if name is not None:
            if name in self.variables:
                raise InvalidInputError(f"variable {name!r} is already on this tape")
            self.variables[name] = node
        return node

    def record(
        self,
        value: np.ndarray,
        parents: Tuple[Node, ...],
        inputs: Tuple[np.ndarray, ...],
        backward_fn: BackwardFn,
    ) -> Node:
        node = Node(self, value, parents, inputs, backward_fn)
        self.nodes.append(node)
        return node

    def backward(self, loss: Node) -> Dict[int, np.ndarray]:
        """
        Propagate d(loss)/d(node) through the record.

        Args:
            loss: Scalar node recorded on this tape

        Returns:
            Gradients keyed by node index, for every node the loss depends on

        Raises:
            InvalidInputError: If the loss is not a scalar or lives on another tape
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise InvalidInputError("loss must be a node recorded on this tape")
        if loss.value.size != 1:
            raise InvalidInputError(f"loss must be a scalar, got shape {loss.value.shape}")

        grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.get(node.index)
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g, node.value, *node.inputs)
            for parent, pg in zip(node.parents, parent_grads):
                if parent is None or pg is None:
                    continue
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg
        return grads

    def gradients(self, loss: Node) -> Dict[str, np.ndarray]:
        """Gradients of the loss for every named variable (zeros where it does not depend on one)."""
        grads = self.backward(loss)
        return {
            name: grads.get(node.index, np.zeros_like(node.value))
            for name, node in self.variables.items()
        }


def value_of(x: ArrayLike) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _apply(forward: Callable[..., np.ndarray], backward_fn: BackwardFn, *args: ArrayLike) -> ArrayLike:
    tape = None
    for arg in args:
        if isinstance(arg, Node):
            if tape is not None and arg.tape is not tape:
                raise InvalidInputError("cannot mix nodes from different tapes")
            tape = arg.tape
    values = tuple(value_of(arg) for arg in args)
    out = forward(*values)
    if tape is None:
        return out
    parents = tuple(arg if isinstance(arg, Node) else None for arg in args)
    return tape.record(out, parents, values, backward_fn)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise arithmetic

def add(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return _apply(
        np.add,
        lambda g, out, x, y: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)),
        a, b,
    )


def sub(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return _apply(
        np.subtract,
        lambda g, out, x, y: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)),
        a, b,
    )


def mul(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return _apply(
        np.multiply,
        lambda g, out, x, y: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        a, b,
    )


def neg(a: ArrayLike) -> ArrayLike:
    return _apply(np.negative, lambda g, out, x: (-g,), a)


def square(a: ArrayLike) -> ArrayLike:
    return _apply(np.square, lambda g, out, x: (2.0 * x * g,), a)


def absolute(a: ArrayLike) -> ArrayLike:
    return _apply(np.abs, lambda g, out, x: (np.sign(x) * g,), a)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: ArrayLike) -> ArrayLike:
    return _apply(_sigmoid, lambda g, out, x: (g * out * (1.0 - out),), a)


def tanh(a: ArrayLike) -> ArrayLike:
    return _apply(np.tanh, lambda g, out, x: (g * (1.0 - out * out),), a)


# Linear algebra and shape

def _matmul_backward(g: np.ndarray, out: np.ndarray, x: np.ndarray, y: np.ndarray):
    if x.ndim < 2 or y.ndim < 2:
        raise ShapeMismatchError("matmul operands must be at least 2-D")
    gx = g @ np.swapaxes(y, -1, -2)
    gy = np.swapaxes(x, -1, -2) @ g
    return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)


def matmul(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return _apply(np.matmul, _matmul_backward, a, b)


def sum(  # noqa: A001
    a: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False
) -> ArrayLike:
    def backward(g, out, x):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _apply(lambda x: np.sum(x, axis=axis, keepdims=keepdims), backward, a)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> ArrayLike:
    return _apply(lambda x: np.reshape(x, shape), lambda g, out, x: (g.reshape(x.shape),), a)


def swapaxes(a: ArrayLike, axis1: int, axis2: int) -> ArrayLike:
    return _apply(
        lambda x: np.swapaxes(x, axis1, axis2),
        lambda g, out, x: (np.swapaxes(g, axis1, axis2),),
        a,
    )


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(item, (int, np.integer, slice)) or item is None or item is Ellipsis for item in items)


def getitem(a: ArrayLike, index) -> ArrayLike:
    basic = _is_basic_index(index)

    def backward(g, out, x):
        full = np.zeros_like(x)
        if basic:
            # Basic indexing selects each element at most once
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _apply(lambda x: x[index], backward, a)


def concat(items: Sequence[ArrayLike], axis: int = -1) -> ArrayLike:
    def backward(g, out, *xs):
        bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
        return tuple(np.split(g, bounds, axis=axis))

    return _apply(lambda *xs: np.concatenate(xs, axis=axis), backward, *items)


def stack(items: Sequence[ArrayLike], axis: int = 0) -> ArrayLike:
    def backward(g, out, *xs):
        return tuple(np.moveaxis(g, axis, 0))

    return _apply(lambda *xs: np.stack(xs, axis=axis), backward, *items)


# Rotation ops

def _rodrigues_backward(g: np.ndarray, out: np.ndarray, v: np.ndarray):
    # dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) R / theta^2, and [e_i]x near zero
    theta_sq = np.sum(v * v, axis=-1)[..., None, None]
    small = theta_sq < SMALL_ANGLE ** 2
    safe = np.where(small, 1.0, theta_sq)
    identity = np.eye(3)
    k = skew(v)
    grad = np.zeros_like(v)
    for i in range(3):
        e_i = identity[i]
        residual = np.einsum("...jk,k->...j", identity - out, e_i)
        term = (v[..., i, None, None] * k + skew(np.cross(v, residual))) @ out / safe
        d_i = np.where(small, skew(np.broadcast_to(e_i, v.shape)), term)
        grad[..., i] = np.sum(g * d_i, axis=(-2, -1))
    return (grad,)


def rodrigues(v: ArrayLike) -> ArrayLike:
    """Rotation matrices (..., 3, 3) of axis-angle vectors (..., 3); any norm is accepted."""
    return _apply(aa_to_mat, _rodrigues_backward, v)


def _geodesic_terms(m: np.ndarray):
    w = vee(m)
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    return w, s, c, np.arctan2(s, c)


def _geodesic_sq_backward(g: np.ndarray, out: np.ndarray, m: np.ndarray):
    w, s, c, theta = _geodesic_terms(m)
    r_sq = np.maximum(s * s + c * c, 1e-300)
    # theta / s -> 1 / c as s -> 0 near the identity; near a half turn it grows like pi / s
    near_identity = (s < SMALL_ANGLE) & (c > 0)
    ratio = np.where(near_identity, 1.0 / np.where(c > 0, c, 1.0), theta / np.where(s > 0, s, 1.0))
    coeff_w = (2.0 * ratio * c / r_sq)[..., None, None]
    coeff_c = (2.0 * theta * s / r_sq)[..., None, None]
    d_m = coeff_w * 0.5 * skew(w) - coeff_c * 0.5 * np.eye(3)
    return (g[..., None, None] * d_m,)


def geodesic_sq(m: ArrayLike) -> ArrayLike:
    """Squared rotation angle of (..., 3, 3) relative rotations, atan2 form."""
    return _apply(lambda x: _geodesic_terms(x)[3] ** 2, _geodesic_sq_backward, m)


def _wrap_aa_backward(g: np.ndarray, out: np.ndarray, v: np.ndarray):
    # Outside the ball: v' = v (theta_w / theta), Jacobian s I + (2 pi k / theta^3) v v^T
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    theta_w = np.linalg.norm(out, axis=-1, keepdims=True) * np.sign(np.sum(out * v, axis=-1, keepdims=True))
    outside = theta > np.pi
    safe = np.where(outside, theta, 1.0)
    scale = np.where(outside, theta_w / safe, 1.0)
    shift = np.where(outside, (theta - theta_w) / safe ** 3, 0.0)
    return (scale * g + shift * np.sum(v * g, axis=-1, keepdims=True) * v,)


def wrap_aa(v: ArrayLike) -> ArrayLike:
    """Axis-angle wrapped into the canonical ball, differentiable in the raw vector."""
    return _apply(_wrap_aa_array, _wrap_aa_backward, v)
