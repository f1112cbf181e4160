"""Dense float64 tensors with define-by-run reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients attach a :class:`Node` to their result recording the inputs and a
local gradient rule. :func:`backward` linearises the graph reachable from a
scalar loss into a :class:`ComputationTape` (topological order) and replays it
in reverse, accumulating ``d loss / d leaf`` into every leaf's ``grad``.

There is no broadcasting: binary elementwise operations require equal shapes,
and row-wise bias addition has its own operation (:func:`add_rowvec`).
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from .errors import ContractError, DimensionError

_state = threading.local()


def _recording() -> bool:
    return not getattr(_state, "no_grad", False)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference only)."""
    prev = getattr(_state, "no_grad", False)
    _state.no_grad = True
    try:
        yield
    finally:
        _state.no_grad = prev


class Node:
    __slots__ = ("op", "inputs", "rule")

    def __init__(self, op, inputs, rule):
        self.op = op
        self.inputs = inputs
        # rule(grad_out) -> tuple of input grads (None where not needed)
        self.rule = rule


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None

    @classmethod
    def _wrap(cls, arr):
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.node = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        if other.data.ndim == 1:
            return matvec(self, other)
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.full(like.shape, float(x)))


def _result(op: str, arr, inputs, rule) -> Tensor:
    out = Tensor._wrap(arr)
    if _recording() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, rule)
    return out


def _same_shape(op, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matvec(m: Tensor, v: Tensor) -> Tensor:
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: cannot multiply {m.shape} by {v.shape}")
    md, vd = m.data, v.data

    def rule(g):
        return np.outer(g, vd), md.T @ g

    return _result("matvec", md @ vd, (m, v), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def rule(g):
        return g @ bd.T, ad.T @ g

    return _result("matmul", ad @ bd, (a, b), rule)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got {a.shape}")
    return _result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-batched affine map ``x @ w.T + b`` for ``x`` of shape (n, in)."""
    return add_rowvec(matmul(x, transpose(w)), b)


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise DimensionError(f"add_rowvec: cannot add {v.shape} to rows of {x.shape}")
    return _result("add_rowvec", x.data + v.data, (x, v), lambda g: (g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _result("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _result("square", xd * xd, (x,), lambda g: (2.0 * xd * g,))


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    xd = x.data
    return _result("abs", np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


def select_rows(mask, a: Tensor, b: Tensor) -> Tensor:
    """Row ``i`` of the result is ``a[i]`` where ``mask[i]`` else ``b[i]``."""
    _same_shape("select_rows", a, b)
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.shape[:1]:
        raise DimensionError(f"select_rows: mask {m.shape} vs rows of {a.shape}")
    mm = m.reshape((-1,) + (1,) * (a.data.ndim - 1))
    return _result(
        "select_rows",
        np.where(mm, a.data, b.data),
        (a, b),
        lambda g: (np.where(mm, g, 0.0), np.where(mm, 0.0, g)),
    )


# ---------------------------------------------------------------------------
# reductions and reshaping


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    shape = x.shape
    if axis is None:
        return _result("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))
    out = x.data.sum(axis=axis)

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("sum", out, (x,), rule)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from exc
    return _result("reshape", out, (x,), lambda g: (g.reshape(old),))


def repeat_rows(v: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of ``v`` as rows."""
    out = np.repeat(v.data[None, ...], n, axis=0)
    return _result("repeat_rows", out, (v,), lambda g: (g.sum(axis=0),))


def take_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.shape

    def rule(g):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return (dx,)

    return _result("take_rows", x.data[idx], (x,), rule)


def concat_rows(parts) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    tail = parts[0].shape[1:]
    for p in parts:
        if p.shape[1:] != tail:
            raise DimensionError(f"concat_rows: trailing shape {p.shape[1:]} vs {tail}")
    bounds = np.cumsum([p.shape[0] for p in parts])[:-1]
    return _result(
        "concat_rows",
        np.concatenate([p.data for p in parts], axis=0),
        parts,
        lambda g: tuple(np.split(g, bounds, axis=0)),
    )


def segment_sum(x: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets.

    Rows are accumulated strictly in index order, so equal inputs give
    bit-identical sums.
    """
    ids = np.asarray(segment_ids, dtype=np.intp)
    if ids.shape != x.shape[:1]:
        raise DimensionError(f"segment_sum: ids {ids.shape} vs rows of {x.shape}")
    out = np.zeros((num_segments,) + x.shape[1:])
    np.add.at(out, ids, x.data)
    return _result("segment_sum", out, (x,), lambda g: (g[ids],))


# ---------------------------------------------------------------------------
# losses


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of logits against 0/1 targets."""
    y = np.asarray(targets, dtype=np.float64)
    z = logits.data
    if y.shape != z.shape:
        raise DimensionError(f"bce_with_logits: logits {z.shape} vs targets {y.shape}")
    n = z.size
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    p = _sigmoid(z)
    return _result("bce_with_logits", np.asarray(loss.mean()), (logits,), lambda g: (g * (p - y) / n,))


_BINARY = {"add": add, "sub": sub, "mul": mul}
_UNARY = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "square": square,
    "abs": abs,
    "relu": relu,
    "sum": sum,
    "mean": mean,
}


def elementwise(op: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch an elementwise or reducing operation by name."""
    if op in _BINARY:
        if b is None:
            raise ContractError(f"{op} is binary")
        return _BINARY[op](a, b)
    if op in _UNARY:
        if b is not None:
            raise ContractError(f"{op} is unary")
        return _UNARY[op](a)
    raise ContractError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# backward pass


class ComputationTape:
    """Recorded tensors in topological order (inputs before consumers)."""

    def __init__(self, order):
        self.order = order

    @classmethod
    def from_loss(cls, loss: Tensor) -> "ComputationTape":
        order = []
        seen = set()
        stack = [(loss, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for inp in t.node.inputs:
                    if inp.requires_grad and id(inp) not in seen:
                        stack.append((inp, False))
        return cls(order)

    def __len__(self):
        return len(self.order)

    def replay(self, loss: Tensor) -> int:
        """Propagate gradients from ``loss``; returns the number of visits."""
        grads = {id(loss): np.ones_like(loss.data)}
        visits = 0
        for t in reversed(self.order):
            visits += 1
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.node is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            for inp, ig in zip(t.node.inputs, t.node.rule(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = np.asarray(ig, dtype=np.float64)
        return visits


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into every reachable leaf's ``grad``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    ComputationTape.from_loss(loss).replay(loss)


def grad_check(closure, params, epsilon: float = 1e-5) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``closure`` must be deterministic and read ``p.data`` at call time. The
    relative error of each coordinate uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    for p in params:
        p.zero_grad()
    loss = closure()
    if loss.requires_grad:
        backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        orig = p.data
        for i in range(orig.size):
            bumped = orig.copy()
            bumped.flat[i] += epsilon
            p.data = bumped
            fp = closure().item()
            bumped = orig.copy()
            bumped.flat[i] -= epsilon
            p.data = bumped
            fm = closure().item()
            p.data = orig
            num = (fp - fm) / (2.0 * epsilon)
            an = float(a.flat[i])
            err = np.abs(an - num) / max(np.abs(an), np.abs(num), 1e-8)
            worst = max(worst, float(err))
    for p in params:
        p.zero_grad()
    return worst
