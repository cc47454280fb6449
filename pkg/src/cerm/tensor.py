"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation produces a new :class:`Tensor` that remembers its inputs and a
closure that maps the output gradient to input gradients.  ``backward`` walks
the recorded graph in reverse topological order.  All values are float64.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording a graph (outputs never require grad)."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _elementwise(op: str, fn, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return fn(a, b)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


class Tensor:
    """Dense float64 array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self.name = name

    # construction helpers

    @classmethod
    def _make(cls, data, parents: Sequence["Tensor"], op: str, backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data if type(data) is np.ndarray and data.dtype == np.float64 else _as_array(data)
        out.grad = None
        out.name = None
        out.op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # elementwise arithmetic

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _elementwise("add", np.add, self.data, other.data)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._make(out, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), "neg", lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return Tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self.data, other.data
        out = _elementwise("mul", np.multiply, a, b)

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._make(out, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self.data, other.data
        out = _elementwise("div", np.divide, a, b)

        def backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._make(out, (self, other), "div", backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # shape manipulation

    def reshape(self, *shape) -> "Tensor":
        old = self.shape
        return Tensor._make(self.data.reshape(*shape), (self,), "reshape", lambda g: (g.reshape(old),))

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(axes.index(i) for i in range(len(axes)))
        return Tensor._make(
            self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inverse),)
        )

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), "index", backward)

    # reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if self.data.size != 1 or self.ndim > 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order = graph(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


@dataclass(frozen=True)
class GraphNode:
    op: str
    inputs: tuple[int, ...]
    output: int


def graph(root: Tensor) -> list[Tensor]:
    """Tensors reachable from ``root`` in topological order (inputs first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def trace(root: Tensor) -> list[GraphNode]:
    """Replayable record of primitive applications leading to ``root``."""
    order = graph(root)
    ids = {id(t): i for i, t in enumerate(order)}
    return [GraphNode(t.op, tuple(ids[id(p)] for p in t._parents), ids[id(t)]) for t in order]


# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    x, w = a.data, b.data

    def backward(g):
        if w.ndim == 1:
            ga = np.multiply.outer(g, w)
            gb = np.tensordot(x, g, axes=(tuple(range(x.ndim - 1)), tuple(range(g.ndim))))
            return ga, gb
        ga = g @ np.swapaxes(w, -1, -2)
        gb = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(ga, x.shape), _unbroadcast(gb, w.shape)

    return Tensor._make(x @ w, (a, b), "matmul", backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with weight of shape (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input shape {x.shape} does not match weight shape {weight.shape}")
    out = matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ValueError(f"linear: bias shape {bias.shape} does not match weight shape {weight.shape}")
        out = out + bias
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"dot: incompatible shapes {a.shape} and {b.shape}")
    return (a * b).sum(axis=-1)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), "tanh", lambda g: (g * (1.0 - y * y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return Tensor._make(y, (x,), "exp", lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    v = x.data
    return Tensor._make(np.log(v), (x,), "log", lambda g: (g / v,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return Tensor._make(y, (x,), "sqrt", lambda g: (g * 0.5 / y,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); no gradient flows where the floor is active."""
    mask = x.data >= floor
    return Tensor._make(np.maximum(x.data, floor), (x,), "clamp_min", lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._make(s, (x,), "softmax", backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: nothing to concatenate")
    ref = tensors[0].shape
    nd = len(ref)
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != ref[i] for i in range(nd) if i != ax):
            raise ValueError(f"concat: incompatible shapes {ref} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=ax), tensors, "concat", backward)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, ids, g)
        return (full,)

    return Tensor._make(table.data[ids], (table,), "embedding", backward)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by a constant."""
    mask = np.broadcast_to(mask, x.shape)
    return Tensor._make(
        np.where(mask, value, x.data), (x,), "masked_fill", lambda g: (np.where(mask, 0.0, g),)
    )


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-rate) during training, identity otherwise."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor._make(x.data * keep, (x,), "dropout", lambda g: (g * keep,))


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and add ``shift``."""
    if gain.shape != x.shape[-1:] or shift.shape != x.shape[-1:]:
        raise ValueError(f"layer_norm: gain {gain.shape} / shift {shift.shape} do not match input {x.shape}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    g_data = gain.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g * g_data
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(xhat * g_data + shift.data, (x, gain, shift), "layer_norm", backward)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine along the last axis; defined as 0 (with zero gradient) if either row has zero norm."""
    if a.shape != b.shape:
        raise ValueError(f"cosine_similarity: incompatible shapes {a.shape} and {b.shape}")
    x, y = a.data, b.data
    nx = np.sqrt((x * x).sum(axis=-1))
    ny = np.sqrt((y * y).sum(axis=-1))
    ok = (nx > 0) & (ny > 0)
    denom = np.where(ok, nx * ny, 1.0)
    cos = np.where(ok, (x * y).sum(axis=-1) / denom, 0.0)

    def backward(g):
        sx = np.where(ok, nx, 1.0)[..., None]
        sy = np.where(ok, ny, 1.0)[..., None]
        c = cos[..., None]
        gg = np.where(ok, g, 0.0)[..., None]
        ga = gg * (y / (sx * sy) - c * x / (sx * sx))
        gb = gg * (x / (sx * sy) - c * y / (sy * sy))
        return ga, gb

    return Tensor._make(cos, (a, b), "cosine", backward)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
