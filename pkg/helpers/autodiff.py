"""Reverse-mode automatic differentiation over float64 numpy arrays.

Operations run eagerly; each result is appended to a ``Tape`` together with
the ids of its inputs. ``Tape.backward`` walks the tape in reverse and
accumulates vector-Jacobian products from the ``OPS`` table.

Binary elementwise ops follow numpy broadcasting; gradients are summed back
to each operand's shape. ``matmul`` follows ``numpy.matmul`` including batch
broadcasting.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from helpers.errors import NotScalar, ShapeMismatch, TapeMismatch

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01

ArrayLike = Union[np.ndarray, float, int, Sequence]


def _frozen(value) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(*arrays: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*(a.shape for a in arrays))
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast shapes {[a.shape for a in arrays]}")


@dataclass(frozen=True)
class OpRule:
    forward: Callable[..., np.ndarray]
    backward: Callable[..., Tuple[np.ndarray, ...]]
    check: Optional[Callable[..., None]] = None


def _elementwise(forward, backward) -> OpRule:
    def check(*inputs, **attrs):
        _broadcast_shape(*inputs)

    def unbroadcast_backward(g, *inputs, out, **attrs):
        grads = backward(g, *inputs, out=out, **attrs)
        return tuple(_unbroadcast(np.asarray(gi), x.shape) for gi, x in zip(grads, inputs))

    return OpRule(forward, unbroadcast_backward, check)


def _unary(forward, backward) -> OpRule:
    return OpRule(forward, lambda g, a, out, **attrs: (backward(g, a, out, **attrs),))


def _check_matmul(a, b):
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeMismatch("matmul operands must be at least 1-D")
    inner = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.shape[-1] != inner:
        raise ShapeMismatch(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2:
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeMismatch(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")


def _matmul_backward(g, a, b, out):
    if a.ndim == 1 and b.ndim == 1:
        return g * b, g * a
    a2 = a[None, :] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    if a.ndim == 1:
        g = np.expand_dims(g, -2)
    if b.ndim == 1:
        g = np.expand_dims(g, -1)
    ga = _unbroadcast(g @ np.swapaxes(b2, -1, -2), a2.shape)
    gb = _unbroadcast(np.swapaxes(a2, -1, -2) @ g, b2.shape)
    return ga.reshape(a.shape), gb.reshape(b.shape)


def _normalize_axis(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, tuple) else (axis,)
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeMismatch(f"axis {axis} out of range for {ndim}-D input")
    return tuple(sorted(ax % ndim for ax in axes))


def _reduce_backward(g, a, axis, keepdims, scale=1.0):
    axes = _normalize_axis(axis, a.ndim)
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return (np.broadcast_to(g * scale, a.shape).copy(),)


def _check_reduce(a, axis=None, keepdims=False):
    _normalize_axis(axis, a.ndim)


def _mean_backward(g, a, out, axis=None, keepdims=False):
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return _reduce_backward(g, a, axis, keepdims, 1.0 / count)


def _check_concat(*inputs, axis=0):
    if not inputs:
        raise ShapeMismatch("concat needs at least one input")
    ndim = inputs[0].ndim
    if ndim == 0 or any(x.ndim != ndim for x in inputs):
        raise ShapeMismatch(f"concat inputs need equal rank >= 1: {[x.shape for x in inputs]}")
    ax = axis % ndim
    for x in inputs:
        if x.shape[:ax] + x.shape[ax + 1 :] != inputs[0].shape[:ax] + inputs[0].shape[ax + 1 :]:
            raise ShapeMismatch(f"concat shapes disagree off axis {axis}: {[x.shape for x in inputs]}")


def _concat_backward(g, *inputs, out, axis=0):
    bounds = np.cumsum([x.shape[axis] for x in inputs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _slice_backward(g, a, out, key):
    grad = np.zeros(a.shape)
    np.add.at(grad, key, g)
    return (grad,)


def _transpose_backward(g, a, out, axes=None):
    inverse = None if axes is None else tuple(np.argsort(axes))
    return (np.transpose(g, inverse),)


OPS: Dict[str, OpRule] = {
    "add": _elementwise(lambda a, b: a + b, lambda g, a, b, out: (g, g)),
    "sub": _elementwise(lambda a, b: a - b, lambda g, a, b, out: (g, -g)),
    "mul": _elementwise(lambda a, b: a * b, lambda g, a, b, out: (g * b, g * a)),
    "div": _elementwise(lambda a, b: a / b, lambda g, a, b, out: (g / b, -g * a / (b * b))),
    "matmul": OpRule(np.matmul, lambda g, a, b, out: _matmul_backward(g, a, b, out), _check_matmul),
    "sin": _unary(np.sin, lambda g, a, out: g * np.cos(a)),
    "cos": _unary(np.cos, lambda g, a, out: -g * np.sin(a)),
    "sqrt": _unary(np.sqrt, lambda g, a, out: g * 0.5 / out),
    "neg": _unary(np.negative, lambda g, a, out: -g),
    "square": _unary(np.square, lambda g, a, out: 2.0 * a * g),
    "exp": _unary(np.exp, lambda g, a, out: g * out),
    "tanh": _unary(np.tanh, lambda g, a, out: g * (1.0 - out * out)),
    "relu": _unary(lambda a: np.maximum(a, 0.0), lambda g, a, out: g * (a > 0)),
    "leaky_relu": _unary(
        lambda a, slope=LEAKY_SLOPE: np.where(a > 0, a, slope * a),
        lambda g, a, out, slope=LEAKY_SLOPE: g * np.where(a > 0, 1.0, slope),
    ),
    "sum": OpRule(
        lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims),
        lambda g, a, out, axis=None, keepdims=False: _reduce_backward(g, a, axis, keepdims),
        _check_reduce,
    ),
    "mean": OpRule(
        lambda a, axis=None, keepdims=False: np.mean(a, axis=axis, keepdims=keepdims),
        _mean_backward,
        _check_reduce,
    ),
    "concat": OpRule(lambda *xs, axis=0: np.concatenate(xs, axis=axis), _concat_backward, _check_concat),
    "slice": OpRule(lambda a, key: a[key], _slice_backward),
    "reshape": OpRule(lambda a, shape: a.reshape(shape), lambda g, a, out, shape: (g.reshape(a.shape),)),
    "transpose": OpRule(lambda a, axes=None: np.transpose(a, axes), _transpose_backward),
}


class Node(NamedTuple):
    op: Optional[str]
    inputs: Tuple[int, ...]
    attrs: Dict[str, Any]


class Gradients(dict):
    """Node id -> gradient. Nodes the loss does not depend on read as zeros."""

    def __init__(self, tape: "Tape", grads: Dict[int, np.ndarray]):
        super().__init__(grads)
        self._tape = tape

    def __getitem__(self, key) -> np.ndarray:
        node_id = key.id if isinstance(key, Var) else key
        if dict.__contains__(self, node_id):
            return dict.__getitem__(self, node_id)
        return np.zeros(self._tape.values[node_id].shape)


@dataclass
class Tape:
    nodes: List[Node] = field(default_factory=list)
    values: List[np.ndarray] = field(default_factory=list)
    params: Dict[str, "Var"] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: Node, value: np.ndarray) -> "Var":
        self.nodes.append(node)
        self.values.append(value)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value: ArrayLike) -> "Var":
        return self._append(Node(None, (), {}), _frozen(value))

    def const(self, value: ArrayLike) -> "Var":
        return self._append(Node(None, (), {"const": True}), _frozen(value))

    def param(self, value: ArrayLike, name: Optional[str] = None) -> "Var":
        var = self._append(Node(None, (), {"param": name}), _frozen(value))
        if name is not None:
            self.params[name] = var
        return var

    def lift(self, value: Union["Var", ArrayLike]) -> "Var":
        if isinstance(value, Var):
            if value.tape is not self:
                raise TapeMismatch("operand belongs to another tape")
            return value
        return self.const(value)

    def record(self, op: str, *inputs: Union["Var", ArrayLike], **attrs) -> "Var":
        if op not in OPS:
            raise ValueError(f"unknown op {op!r}")
        rule = OPS[op]
        ids = tuple(self.lift(x).id for x in inputs)
        args = [self.values[i] for i in ids]
        if rule.check is not None:
            rule.check(*args, **attrs)
        try:
            value = rule.forward(*args, **attrs)
        except (ValueError, IndexError) as e:
            raise ShapeMismatch(f"{op}: {e}")
        value = np.asarray(value, dtype=np.float64)
        value.setflags(write=False)
        return self._append(Node(op, ids, attrs), value)

    def backward(self, loss: "Var") -> Gradients:
        if loss.tape is not self:
            raise TapeMismatch("loss belongs to another tape")
        if loss.value.size != 1:
            raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
        for i in range(loss.id, -1, -1):
            g = grads.get(i)
            node = self.nodes[i]
            if g is None or node.op is None:
                continue
            inputs = [self.values[j] for j in node.inputs]
            contributions = OPS[node.op].backward(g, *inputs, out=self.values[i], **node.attrs)
            for j, contribution in zip(node.inputs, contributions):
                grads[j] = contribution if j not in grads else grads[j] + contribution
        return Gradients(self, grads)

    def replay(self) -> List[np.ndarray]:
        """Recompute every recorded value from the leaves."""
        values: List[np.ndarray] = []
        for node, recorded in zip(self.nodes, self.values):
            if node.op is None:
                values.append(recorded)
            else:
                args = [values[j] for j in node.inputs]
                values.append(_frozen(OPS[node.op].forward(*args, **node.attrs)))
        return values


class Var:
    """Handle to a node on a tape."""

    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("len() of a 0-d Var")
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def _op(self, op, *others, **attrs) -> "Var":
        return self.tape.record(op, self, *others, **attrs)

    def _rop(self, op, other) -> "Var":
        return self.tape.record(op, self.tape.lift(other), self)

    def __add__(self, other):
        return self._op("add", other)

    def __radd__(self, other):
        return self._rop("add", other)

    def __sub__(self, other):
        return self._op("sub", other)

    def __rsub__(self, other):
        return self._rop("sub", other)

    def __mul__(self, other):
        return self._op("mul", other)

    def __rmul__(self, other):
        return self._rop("mul", other)

    def __truediv__(self, other):
        return self._op("div", other)

    def __rtruediv__(self, other):
        return self._rop("div", other)

    def __matmul__(self, other):
        return self._op("matmul", other)

    def __rmatmul__(self, other):
        return self._rop("matmul", other)

    def __neg__(self):
        return self._op("neg")

    def __getitem__(self, key):
        return self._op("slice", key=key)

    def sum(self, axis=None, keepdims: bool = False) -> "Var":
        return self._op("sum", axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Var":
        return self._op("mean", axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self._op("reshape", shape=shape)

    def transpose(self, axes=None) -> "Var":
        return self._op("transpose", axes=None if axes is None else tuple(axes))

    @property
    def T(self) -> "Var":
        return self.transpose()


def _tape_of(*inputs) -> Tape:
    for x in inputs:
        if isinstance(x, Var):
            return x.tape
    raise TapeMismatch("at least one operand must be a Var")


def record(op: str, *inputs, **attrs) -> Var:
    return _tape_of(*inputs).record(op, *inputs, **attrs)


def backward(loss: Var) -> Gradients:
    return loss.tape.backward(loss)


def sin(x: Var) -> Var:
    return record("sin", x)


def cos(x: Var) -> Var:
    return record("cos", x)


def sqrt(x: Var) -> Var:
    return record("sqrt", x)


def square(x: Var) -> Var:
    return record("square", x)


def exp(x: Var) -> Var:
    return record("exp", x)


def tanh(x: Var) -> Var:
    return record("tanh", x)


def relu(x: Var) -> Var:
    return record("relu", x)


def leaky_relu(x: Var, slope: float = LEAKY_SLOPE) -> Var:
    return record("leaky_relu", x, slope=slope)


def concat(inputs: Sequence[Union[Var, np.ndarray]], axis: int = 0) -> Var:
    return record("concat", *inputs, axis=axis)


def mse(prediction: Var, target: Union[Var, np.ndarray]) -> Var:
    return square(prediction - target).mean()


def check_gradient(f: Callable[[Var], Var], x: ArrayLike, eps: float = 1e-6) -> float:
    """Largest relative disagreement between tape gradients and central differences.

    The step is ``eps`` rounded to the nearest power of two so that ``x +- h``
    stays exactly representable for moderate ``x``.
    """
    x = np.array(x, dtype=np.float64)
    h = 2.0 ** round(math.log2(eps))

    tape = Tape()
    leaf = tape.leaf(x)
    out = f(leaf)
    flat = out.reshape(-1)
    analytic = np.empty((flat.size, x.size))
    for r in range(flat.size):
        analytic[r] = tape.backward(flat[r])[leaf].ravel()

    numeric = np.empty_like(analytic)
    for j in range(x.size):
        step = np.zeros(x.size)
        step[j] = h
        plus = f(Tape().leaf(x + step.reshape(x.shape))).value.ravel()
        minus = f(Tape().leaf(x - step.reshape(x.shape))).value.ravel()
        numeric[:, j] = (plus - minus) / (2.0 * h)

    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def _split(v: Var, sizes: Sequence[int]) -> List[Var]:
    parts, start = [], 0
    for size in sizes:
        parts.append(v[start : start + size])
        start += size
    return parts


# op -> (function of a flat input vector, sampler of that vector)
def _primitive_cases() -> Dict[str, Tuple[Callable, Callable]]:
    def uniform(n, low=-2.0, high=2.0):
        return lambda rng: rng.uniform(low, high, n)

    def pair(op):
        return lambda v: record(op, *_split(v, (3, 3)))

    def positive_denominator(rng):
        return np.concatenate([rng.uniform(-2.0, 2.0, 3), rng.uniform(0.5, 2.0, 3)])

    return {
        "add": (pair("add"), uniform(6)),
        "sub": (pair("sub"), uniform(6)),
        "mul": (pair("mul"), uniform(6)),
        "div": (pair("div"), positive_denominator),
        "matmul": (lambda v: v[:6].reshape(2, 3) @ v[6:9].reshape(3, 1), uniform(9)),
        "sin": (sin, uniform(3)),
        "cos": (cos, uniform(3)),
        "sqrt": (sqrt, uniform(3, 0.5, 2.0)),
        "neg": (lambda v: -v, uniform(3)),
        "square": (square, uniform(3)),
        "exp": (exp, uniform(3)),
        "tanh": (tanh, uniform(3)),
        "relu": (relu, uniform(3)),
        "leaky_relu": (leaky_relu, uniform(3)),
        "sum": (lambda v: v.reshape(2, 3).sum(axis=1), uniform(6)),
        "mean": (lambda v: v.reshape(2, 3).mean(axis=0), uniform(6)),
        "concat": (lambda v: concat([v[:2] * 2.0, v[2:5]]), uniform(5)),
        "slice": (lambda v: v.reshape(2, 3)[:, 1:], uniform(6)),
        "reshape": (lambda v: v.reshape(3, 2) * v.reshape(3, 2), uniform(6)),
        "transpose": (lambda v: v.reshape(2, 3).T @ v[:2], uniform(6)),
    }


def primitive_suite(seed: int = 0, points: int = 10, eps: float = 1e-6) -> Dict[str, float]:
    """Max relative gradient error per primitive over random points."""
    rng = np.random.default_rng(seed)
    errors = {}
    for op, (f, sample) in _primitive_cases().items():
        errors[op] = max(check_gradient(f, sample(rng), eps) for _ in range(points))
        logger.debug("gradcheck %s: %.3e", op, errors[op])
    return errors
