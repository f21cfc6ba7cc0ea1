"""
Define-by-run reverse-mode automatic differentiation over float64 numpy arrays.

A Graph records every op as it is evaluated. The record can be replayed with
replacement leaf values (forward) and differentiated from any scalar node
(backward). Values are plain numpy arrays; a Graph is rebuilt for every step.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from shared.errors import NonScalarLossError, ShapeError

log = logging.getLogger(__name__)

Array = np.ndarray

LEAVES = ("param", "input", "const")


def as_tensor(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: Tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _expand(grad: Array, shape, axis, keepdims) -> Array:
    if axis is None:
        return np.broadcast_to(grad, shape)
    if not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


# ---------- op kernels: forward(xs, attrs) and backward(g, xs, y, attrs) ----------

def _matmul_fwd(xs, a):
    x, w = xs
    if w.ndim not in (1, 2) or x.ndim == 0:
        raise ValueError(f"matmul supports (..., n) @ (n,) or (n, m); got {x.shape} @ {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"inner dimensions differ: {x.shape} @ {w.shape}")
    return x @ w


def _matmul_bwd(g, xs, y, a):
    x, w = xs
    n = w.shape[0]
    if w.ndim == 2:
        gx = g @ w.T
        gw = np.outer(x, g) if x.ndim == 1 else x.reshape(-1, n).T @ g.reshape(-1, w.shape[1])
    else:
        gx = g[..., None] * w
        gw = x.reshape(-1, n).T @ np.reshape(g, -1)
    return gx, gw


def _softmax(x, axis):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _log_softmax(x, axis):
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _l2n_fwd(xs, a):
    x = xs[0]
    norm = np.linalg.norm(x, axis=a["axis"], keepdims=True)
    if np.any(norm == 0.0):
        log.warning("l2_normalize: zero vector encountered; returning zeros")
    safe = np.where(norm > 0.0, norm, 1.0)
    return np.where(norm > 0.0, x / safe, 0.0)


def _l2n_bwd(g, xs, y, a):
    x = xs[0]
    norm = np.linalg.norm(x, axis=a["axis"], keepdims=True)
    safe = np.where(norm > 0.0, norm, 1.0)
    gx = (g - y * np.sum(g * y, axis=a["axis"], keepdims=True)) / safe
    return (np.where(norm > 0.0, gx, 0.0),)


def _select_bwd(g, xs, y, a):
    grad = np.zeros_like(xs[0])
    index = [slice(None)] * xs[0].ndim
    index[a["axis"]] = a["index"]
    grad[tuple(index)] = g
    return (grad,)


def _pick_fwd(xs, a):
    x = xs[0]
    idx = a["indices"]
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ValueError(f"pick needs (B, n) values and (B,) indices; got {x.shape} and {idx.shape}")
    return x[np.arange(x.shape[0]), idx]


def _pick_bwd(g, xs, y, a):
    grad = np.zeros_like(xs[0])
    grad[np.arange(grad.shape[0]), a["indices"]] = g
    return (grad,)


def _concat_bwd(g, xs, y, a):
    axis = a["axis"]
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, cuts, axis=axis))


def _mean_bwd(g, xs, y, a):
    x = xs[0]
    count = x.size if a["axis"] is None else x.shape[a["axis"]]
    return (_expand(g, x.shape, a["axis"], a["keepdims"]) / count,)


@dataclass(frozen=True)
class Kernel:
    forward: Callable
    backward: Optional[Callable]


KERNELS: Dict[str, Kernel] = {
    "matmul": Kernel(_matmul_fwd, _matmul_bwd),
    "add": Kernel(lambda xs, a: xs[0] + xs[1],
                  lambda g, xs, y, a: (_unbroadcast(g, xs[0].shape), _unbroadcast(g, xs[1].shape))),
    "sub": Kernel(lambda xs, a: xs[0] - xs[1],
                  lambda g, xs, y, a: (_unbroadcast(g, xs[0].shape), _unbroadcast(-g, xs[1].shape))),
    "mul": Kernel(lambda xs, a: xs[0] * xs[1],
                  lambda g, xs, y, a: (_unbroadcast(g * xs[1], xs[0].shape), _unbroadcast(g * xs[0], xs[1].shape))),
    "tanh": Kernel(lambda xs, a: np.tanh(xs[0]), lambda g, xs, y, a: (g * (1.0 - y * y),)),
    "relu": Kernel(lambda xs, a: np.maximum(xs[0], 0.0), lambda g, xs, y, a: (g * (xs[0] > 0.0),)),
    "sigmoid": Kernel(lambda xs, a: 0.5 * (np.tanh(0.5 * xs[0]) + 1.0), lambda g, xs, y, a: (g * y * (1.0 - y),)),
    "exp": Kernel(lambda xs, a: np.exp(xs[0]), lambda g, xs, y, a: (g * y,)),
    "log": Kernel(lambda xs, a: np.log(xs[0]), lambda g, xs, y, a: (g / xs[0],)),
    "square": Kernel(lambda xs, a: xs[0] * xs[0], lambda g, xs, y, a: (2.0 * g * xs[0],)),
    "softmax": Kernel(lambda xs, a: _softmax(xs[0], a["axis"]),
                      lambda g, xs, y, a: (y * (g - np.sum(g * y, axis=a["axis"], keepdims=True)),)),
    "log_softmax": Kernel(lambda xs, a: _log_softmax(xs[0], a["axis"]),
                          lambda g, xs, y, a: (g - np.exp(y) * np.sum(g, axis=a["axis"], keepdims=True),)),
    "sum": Kernel(lambda xs, a: np.sum(xs[0], axis=a["axis"], keepdims=a["keepdims"]),
                  lambda g, xs, y, a: (_expand(g, xs[0].shape, a["axis"], a["keepdims"]),)),
    "mean": Kernel(lambda xs, a: np.mean(xs[0], axis=a["axis"], keepdims=a["keepdims"]), _mean_bwd),
    "l2_normalize": Kernel(_l2n_fwd, _l2n_bwd),
    "stop_gradient": Kernel(lambda xs, a: xs[0].copy(), None),
    "concat": Kernel(lambda xs, a: np.concatenate(xs, axis=a["axis"]), _concat_bwd),
    "reshape": Kernel(lambda xs, a: xs[0].reshape(a["shape"]), lambda g, xs, y, a: (g.reshape(xs[0].shape),)),
    "select": Kernel(lambda xs, a: np.take(xs[0], a["index"], axis=a["axis"]), _select_bwd),
    "pick": Kernel(_pick_fwd, _pick_bwd),
}


@dataclass(frozen=True)
class Node:
    op: str
    inputs: Tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    name: Optional[str] = None


class Var:
    """Handle on a node of a Graph."""

    __slots__ = ("graph", "index")

    def __init__(self, graph: "Graph", index: int):
        self.graph = graph
        self.index = index

    @property
    def value(self) -> Array:
        return self.graph.values[self.index]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def _lift(self, other) -> "Var":
        return other if isinstance(other, Var) else self.graph.const(other)

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    def __radd__(self, other):
        return self.graph.add(self._lift(other), self)

    def __sub__(self, other):
        return self.graph.sub(self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.sub(self._lift(other), self)

    def __mul__(self, other):
        return self.graph.mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.mul(self._lift(other), self)

    def __neg__(self):
        return self.graph.mul(self, self.graph.const(-1.0))

    def __matmul__(self, other):
        return self.graph.matmul(self, self._lift(other))

    def __repr__(self) -> str:
        node = self.graph.nodes[self.index]
        return f"Var({node.op}#{self.index}, shape={self.shape})"


class Graph:
    """Op record plus the values computed while recording."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.values: List[Array] = []
        self.params: Dict[str, int] = {}
        self.inputs: Dict[str, int] = {}
        self.outputs: Dict[str, int] = {}
        self.trainable: Dict[str, bool] = {}
        self._requires: List[bool] = []

    # ----- leaves -----
    def _leaf(self, op: str, value, name: Optional[str], requires: bool) -> Var:
        self.nodes.append(Node(op, (), {}, name))
        self.values.append(as_tensor(value))
        self._requires.append(requires)
        return Var(self, len(self.nodes) - 1)

    def param(self, name: str, value, trainable: bool = True) -> Var:
        if name in self.params:
            return Var(self, self.params[name])
        v = self._leaf("param", value, name, trainable)
        self.params[name] = v.index
        self.trainable[name] = trainable
        return v

    def input(self, name: str, value) -> Var:
        v = self._leaf("input", value, name, False)
        self.inputs[name] = v.index
        return v

    def const(self, value) -> Var:
        return self._leaf("const", value, None, False)

    def output(self, name: str, var: Var) -> Var:
        self.outputs[name] = var.index
        return var

    # ----- recording -----
    def _apply(self, op: str, inputs: Sequence[Var], **attrs) -> Var:
        kernel = KERNELS[op]
        xs = [self.values[v.index] for v in inputs]
        index = len(self.nodes)
        try:
            y = kernel.forward(xs, attrs)
        except ValueError as e:
            shapes = ", ".join(str(x.shape) for x in xs)
            raise ShapeError(f"{op}#{index}", f"{e} (input shapes: {shapes})") from e
        self.nodes.append(Node(op, tuple(v.index for v in inputs), attrs))
        self.values.append(np.asarray(y, dtype=np.float64))
        requires = kernel.backward is not None and any(self._requires[v.index] for v in inputs)
        self._requires.append(requires)
        return Var(self, index)

    def matmul(self, x: Var, w: Var) -> Var:
        return self._apply("matmul", [x, w])

    def add(self, x: Var, y: Var) -> Var:
        return self._apply("add", [x, y])

    def sub(self, x: Var, y: Var) -> Var:
        return self._apply("sub", [x, y])

    def mul(self, x: Var, y: Var) -> Var:
        return self._apply("mul", [x, y])

    def tanh(self, x: Var) -> Var:
        return self._apply("tanh", [x])

    def relu(self, x: Var) -> Var:
        return self._apply("relu", [x])

    def sigmoid(self, x: Var) -> Var:
        return self._apply("sigmoid", [x])

    def exp(self, x: Var) -> Var:
        return self._apply("exp", [x])

    def log(self, x: Var) -> Var:
        return self._apply("log", [x])

    def square(self, x: Var) -> Var:
        return self._apply("square", [x])

    def softmax(self, x: Var, axis: int = -1) -> Var:
        return self._apply("softmax", [x], axis=axis)

    def log_softmax(self, x: Var, axis: int = -1) -> Var:
        return self._apply("log_softmax", [x], axis=axis)

    def sum(self, x: Var, axis: Optional[int] = None, keepdims: bool = False) -> Var:
        return self._apply("sum", [x], axis=axis, keepdims=keepdims)

    def mean(self, x: Var, axis: Optional[int] = None, keepdims: bool = False) -> Var:
        return self._apply("mean", [x], axis=axis, keepdims=keepdims)

    def l2_normalize(self, x: Var, axis: int = -1) -> Var:
        return self._apply("l2_normalize", [x], axis=axis)

    def stop_gradient(self, x: Var) -> Var:
        return self._apply("stop_gradient", [x])

    def concat(self, xs: Sequence[Var], axis: int = -1) -> Var:
        return self._apply("concat", list(xs), axis=axis)

    def reshape(self, x: Var, shape: Tuple[int, ...]) -> Var:
        return self._apply("reshape", [x], shape=tuple(shape))

    def select(self, x: Var, index: int, axis: int = 0) -> Var:
        return self._apply("select", [x], index=int(index), axis=axis)

    def pick(self, x: Var, indices) -> Var:
        return self._apply("pick", [x], indices=np.asarray(indices, dtype=np.int64))

    # ----- replay -----
    def replay(self, overrides: Mapping[str, Array]) -> List[Array]:
        """Re-evaluate the record with replacement values for named params/inputs."""
        values: List[Array] = []
        for node, recorded in zip(self.nodes, self.values):
            if node.op in LEAVES:
                values.append(as_tensor(overrides[node.name]) if node.name in overrides else recorded)
                continue
            xs = [values[i] for i in node.inputs]
            values.append(np.asarray(KERNELS[node.op].forward(xs, node.attrs), dtype=np.float64))
        return values


def forward(graph: Graph, inputs: Mapping[str, Array]) -> Dict[str, Array]:
    """Replay the graph with the given named leaves; return the named outputs."""
    missing = [name for name in inputs if name not in graph.inputs and name not in graph.params]
    if missing:
        raise ShapeError("forward", f"unknown leaves: {', '.join(missing)}")
    for name, value in inputs.items():
        index = graph.inputs.get(name, graph.params.get(name))
        if np.shape(value) != graph.values[index].shape:
            raise ShapeError(f"{name}#{index}", f"expected shape {graph.values[index].shape}, got {np.shape(value)}")
    values = graph.replay(inputs)
    return {name: values[i] for name, i in graph.outputs.items()}


def backward(graph: Graph, loss: Var) -> Dict[str, Array]:
    """Gradient of a scalar node w.r.t. every trainable parameter of the graph."""
    if loss.graph is not graph:
        raise ValueError("loss node belongs to another graph")
    if loss.value.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.value.shape}")

    grads: List[Optional[Array]] = [None] * (loss.index + 1)
    grads[loss.index] = np.ones_like(loss.value)
    for i in range(loss.index, -1, -1):
        g = grads[i]
        node = graph.nodes[i]
        if g is None or node.op in LEAVES or not graph._requires[i]:
            continue
        xs = [graph.values[j] for j in node.inputs]
        for j, gx in zip(node.inputs, KERNELS[node.op].backward(g, xs, graph.values[i], node.attrs)):
            if not graph._requires[j]:
                continue
            gx = np.asarray(gx, dtype=np.float64)
            grads[j] = gx if grads[j] is None else grads[j] + gx

    out = {}
    for name, index in graph.params.items():
        if not graph.trainable[name]:
            continue
        g = grads[index] if index <= loss.index else None
        out[name] = np.zeros_like(graph.values[index]) if g is None else np.array(g)
    return out
