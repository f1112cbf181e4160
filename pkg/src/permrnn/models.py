"""Recurrent cells, output heads, DeepSets, and the text model format.

All recurrent models share the cell protocol used by the regularizers and the
auditor:

``initial_state()``
    the learned initial state ``s0`` as a (k,) tensor
``step(S, X)``
    one batched update, ``S`` (B, k) tensor, ``X`` (B, d) tensor
``fold(S, X, lengths)``
    fold the batched step over ``X`` (B, T, d) (plain array) from ``S``;
    rows stop updating after ``lengths[b]`` steps
``parameters()``
    trainable tensors in declared order
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ContractError, DimensionError, UnsupportedError
from .tensor import Tensor

_ACTIVATIONS = {"relu": T.relu, "tanh": T.tanh, "identity": lambda x: x}


def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


# ---------------------------------------------------------------------------
# feed-forward nets


@dataclass
class MlpParams:
    """Feed-forward net as a list of ``(W, b)`` layers.

    ``W`` has shape (out, in). An empty layer list is the identity map.
    """

    layers: list
    activations: list
    width: int | None = None  # only consulted for the identity net

    def __post_init__(self):
        if len(self.layers) != len(self.activations):
            raise DimensionError("one activation tag per layer")
        for (w, b), act in zip(self.layers, self.activations):
            if w.data.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"layer weight {w.shape} does not match bias {b.shape}")
            if act not in _ACTIVATIONS:
                raise UnsupportedError(f"unknown activation {act!r}")
        for (w1, _), (w2, _) in zip(self.layers, self.layers[1:]):
            if w2.shape[1] != w1.shape[0]:
                raise DimensionError(f"layer widths do not conform: {w1.shape} then {w2.shape}")

    @classmethod
    def init(cls, widths, rng, activation="relu", final_activation="identity"):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for ``widths[0] -> ... -> widths[-1]``."""
        layers, acts = [], []
        for i, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
            bound = 1.0 / math.sqrt(n_in)
            layers.append((_param(rng.uniform(-bound, bound, (n_out, n_in))),
                           _param(rng.uniform(-bound, bound, n_out))))
            acts.append(final_activation if i == len(widths) - 2 else activation)
        return cls(layers, acts)

    @classmethod
    def identity(cls, width: int):
        return cls([], [], width=width)

    @classmethod
    def from_arrays(cls, weights, biases, activations):
        return cls([(_param(w), _param(b)) for w, b in zip(weights, biases)], list(activations))

    @property
    def in_width(self) -> int:
        return self.layers[0][0].shape[1] if self.layers else self.width

    @property
    def out_width(self) -> int:
        return self.layers[-1][0].shape[0] if self.layers else self.width

    def parameters(self):
        return [p for layer in self.layers for p in layer]

    def forward(self, x: Tensor) -> Tensor:
        """Apply to rows of ``x`` (n, in)."""
        for (w, b), act in zip(self.layers, self.activations):
            x = _ACTIVATIONS[act](T.linear(x, w, b))
        return x

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim == 1:
            return T.reshape(self.forward(T.reshape(x, (1, -1))), (-1,))
        return self.forward(x)


def output_head(g: MlpParams, s: Tensor) -> Tensor:
    """``y = g(s)``; for classifiers this is a logit, the loss applies the link."""
    if g.in_width is not None and s.shape[-1] != g.in_width:
        raise DimensionError(f"head expects width {g.in_width}, state has shape {s.shape}")
    return g(s)


# ---------------------------------------------------------------------------
# vanilla RNN


@dataclass
class RnnParams:
    """``s' = W_out @ act(W_x x + W_s s + B)`` with learned ``s0``."""

    W_out: Tensor  # (k, h)
    W_x: Tensor  # (h, d)
    W_s: Tensor  # (h, k)
    B: Tensor  # (h,)
    s0: Tensor  # (k,)
    activation: str = "tanh"

    def __post_init__(self):
        h, d = self.W_x.shape
        k = self.s0.shape[0]
        if h < 1:
            raise DimensionError("hidden width must be at least 1")
        if self.W_s.shape != (h, k) or self.W_out.shape != (k, h) or self.B.shape != (h,):
            raise DimensionError(
                f"inconsistent RNN shapes W_out{self.W_out.shape} W_x{self.W_x.shape} "
                f"W_s{self.W_s.shape} B{self.B.shape} s0{self.s0.shape}")
        if self.activation not in ("relu", "tanh"):
            raise UnsupportedError(f"RNN activation must be relu or tanh, got {self.activation!r}")

    @property
    def hidden(self) -> int:
        return self.W_x.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_x.shape[1]

    @property
    def state_size(self) -> int:
        return self.s0.shape[0]

    def parameters(self):
        return [self.W_out, self.W_x, self.W_s, self.B, self.s0]

    def parameter_count(self, include_initial_state: bool = False) -> int:
        n = sum(p.size for p in (self.W_out, self.W_x, self.W_s, self.B))
        return n + (self.s0.size if include_initial_state else 0)

    @classmethod
    def init(cls, input_size, hidden, state_size, rng, activation="tanh"):
        bound = 1.0 / math.sqrt(hidden)
        u = lambda *shape: _param(rng.uniform(-bound, bound, shape))  # noqa: E731
        return cls(W_out=u(state_size, hidden), W_x=u(hidden, input_size), W_s=u(hidden, state_size),
                   B=u(hidden), s0=_param(np.zeros(state_size)), activation=activation)


def rnn_step(params: RnnParams, s: Tensor, x: Tensor) -> Tensor:
    if s.shape != (params.state_size,) or x.shape != (params.input_size,):
        raise DimensionError(
            f"rnn_step: state {s.shape} / input {x.shape} do not match "
            f"({params.state_size},) / ({params.input_size},)")
    pre = T.add(T.add(T.matvec(params.W_x, x), T.matvec(params.W_s, s)), params.B)
    return T.matvec(params.W_out, _ACTIVATIONS[params.activation](pre))


# ---------------------------------------------------------------------------
# GRU


@dataclass
class GruParams:
    """Gated recurrent unit.

    z = sigmoid(W_z x + U_z s + b_z), r = sigmoid(W_r x + U_r s + b_r),
    n = tanh(W_n x + U_n (r * s) + b_n), s' = (1 - z) * n + z * s.
    """

    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_n: Tensor
    U_n: Tensor
    b_n: Tensor
    s0: Tensor

    def __post_init__(self):
        h, d = self.W_z.shape
        for name in ("W_r", "W_n"):
            if getattr(self, name).shape != (h, d):
                raise DimensionError(f"{name} must be {(h, d)}")
        for name in ("U_z", "U_r", "U_n"):
            if getattr(self, name).shape != (h, h):
                raise DimensionError(f"{name} must be {(h, h)}")
        for name in ("b_z", "b_r", "b_n", "s0"):
            if getattr(self, name).shape != (h,):
                raise DimensionError(f"{name} must be {(h,)}")

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def state_size(self) -> int:
        return self.hidden

    def weights(self):
        return [self.W_z, self.U_z, self.b_z, self.W_r, self.U_r, self.b_r, self.W_n, self.U_n, self.b_n]

    def parameters(self):
        return self.weights() + [self.s0]

    @classmethod
    def init(cls, input_size, hidden, rng):
        bound = 1.0 / math.sqrt(hidden)
        u = lambda *shape: _param(rng.uniform(-bound, bound, shape))  # noqa: E731
        return cls(u(hidden, input_size), u(hidden, hidden), u(hidden),
                   u(hidden, input_size), u(hidden, hidden), u(hidden),
                   u(hidden, input_size), u(hidden, hidden), u(hidden),
                   _param(np.zeros(hidden)))


def _gru_step_rows(p: GruParams, S: Tensor, X: Tensor) -> Tensor:
    def gate(W, U, b, s):
        return T.add_rowvec(T.add(T.matmul(X, T.transpose(W)), T.matmul(s, T.transpose(U))), b)

    z = T.sigmoid(gate(p.W_z, p.U_z, p.b_z, S))
    r = T.sigmoid(gate(p.W_r, p.U_r, p.b_r, S))
    n = T.tanh(gate(p.W_n, p.U_n, p.b_n, T.mul(r, S)))
    one = Tensor._wrap(np.ones(z.shape))
    return T.add(T.mul(T.sub(one, z), n), T.mul(z, S))


def gru_step(params: GruParams, s: Tensor, x: Tensor) -> Tensor:
    if s.shape != (params.hidden,) or x.shape != (params.input_size,):
        raise DimensionError(
            f"gru_step: state {s.shape} / input {x.shape} do not match "
            f"({params.hidden},) / ({params.input_size},)")
    out = _gru_step_rows(params, T.reshape(s, (1, -1)), T.reshape(x, (1, -1)))
    return T.reshape(out, (-1,))


# ---------------------------------------------------------------------------
# cells


class Cell:
    """Base cell: batched ``step`` plus a generic masked ``fold``."""

    state_size: int
    input_size: int

    def initial_state(self) -> Tensor:
        raise NotImplementedError

    def step(self, S: Tensor, X: Tensor) -> Tensor:
        raise NotImplementedError

    def parameters(self):
        return []

    def fold(self, S: Tensor, X, lengths=None) -> Tensor:
        X = np.asarray(X, dtype=np.float64)
        B, steps = X.shape[:2]
        lengths = np.full(B, steps) if lengths is None else np.asarray(lengths)
        for t in range(steps):
            active = t < lengths
            if not active.any():
                break
            S = T.select_rows(active, self.step(S, Tensor._wrap(X[:, t])), S)
        return S

    def __call__(self, s: Tensor, x: Tensor) -> Tensor:
        """Single-sequence step on vectors."""
        out = self.step(T.reshape(s, (1, -1)), T.reshape(x, (1, -1)))
        return T.reshape(out, (-1,))


class RnnCell(Cell):
    def __init__(self, params: RnnParams):
        self.params = params
        self.state_size = params.state_size
        self.input_size = params.input_size

    def initial_state(self):
        return self.params.s0

    def parameters(self):
        return self.params.parameters()

    def step(self, S, X):
        p = self.params
        pre = T.add_rowvec(T.add(T.matmul(X, T.transpose(p.W_x)), T.matmul(S, T.transpose(p.W_s))), p.B)
        return T.matmul(_ACTIVATIONS[p.activation](pre), T.transpose(p.W_out))

    def __call__(self, s, x):
        return rnn_step(self.params, s, x)

    def fold(self, S, X, lengths=None):
        p = self.params
        return kernels.rnn_fold(p.W_x, p.W_s, p.B, p.W_out, S, X, lengths, activation=p.activation)


class GruCell(Cell):
    def __init__(self, params: GruParams):
        self.params = params
        self.state_size = params.hidden
        self.input_size = params.input_size

    def initial_state(self):
        return self.params.s0

    def parameters(self):
        return self.params.parameters()

    def step(self, S, X):
        return _gru_step_rows(self.params, S, X)

    def __call__(self, s, x):
        return gru_step(self.params, s, x)

    def fold(self, S, X, lengths=None):
        return kernels.gru_fold(self.params.weights(), S, X, lengths)


class StepCell(Cell):
    """Cell from a batched tensor function ``fn(S, X) -> S'``.

    Handy for hand-built update rules such as ``s' = max(s, x)``.
    """

    def __init__(self, fn, s0, input_size: int = 1, params=()):
        self.fn = fn
        self.s0 = s0 if isinstance(s0, Tensor) else Tensor(np.atleast_1d(np.asarray(s0, dtype=float)))
        self.state_size = self.s0.shape[0]
        self.input_size = input_size
        self._params = list(params)

    def initial_state(self):
        return self.s0

    def parameters(self):
        return list(self._params)

    def step(self, S, X):
        return self.fn(S, X)


def max_cell() -> StepCell:
    """``s' = max(s, x)`` written with one ReLU: ``s + relu(x - s)``."""
    return StepCell(lambda S, X: T.add(S, T.relu(T.sub(X, S))), [0.0])


def additive_cell() -> StepCell:
    """``s' = s + x``."""
    return StepCell(lambda S, X: T.add(S, X), [0.0])


def doubling_cell() -> StepCell:
    """``s' = 2 s + x``, the order-sensitive witness."""
    return StepCell(lambda S, X: T.add(T.scale(S, 2.0), X), [0.0])


class TableCell(Cell):
    """Finite-state cell: ``s' = table[s, x]`` over integer states and inputs.

    Not differentiable; used by exhaustive invariance checks.
    """

    def __init__(self, table, s0: int = 0):
        self.table = np.asarray(table, dtype=np.int64)
        self.s0 = Tensor([float(s0)])
        self.state_size = 1
        self.input_size = 1

    def initial_state(self):
        return self.s0

    def step(self, S, X):
        s = S.data[:, 0].astype(np.int64)
        x = X.data[:, 0].astype(np.int64)
        return Tensor._wrap(self.table[s, x].astype(np.float64)[:, None])


def run_sequence(cell, s0: Tensor, xs, trace: bool = False):
    """Left fold ``f(...f(f(s0, x1), x2)..., xn)``.

    ``cell`` is any callable ``(s, x) -> s`` on vectors. With ``trace`` the
    list of visited states (``s0`` first) is returned as well.
    """
    s = s0
    states = [s0]
    for x in xs:
        x = x if isinstance(x, Tensor) else Tensor(np.atleast_1d(np.asarray(x, dtype=float)))
        s = cell(s, x)
        states.append(s)
    return (s, states) if trace else s


# ---------------------------------------------------------------------------
# input encodings and the sequence model


@dataclass(frozen=True)
class Encoding:
    """Integer-to-feature map: ``scalar`` (x / alphabet_max), ``onehot``, ``raw``."""

    kind: str = "scalar"
    alphabet_max: int = 1

    def __post_init__(self):
        if self.kind not in ("scalar", "onehot", "raw"):
            raise UnsupportedError(f"unknown encoding {self.kind!r}")

    @property
    def width(self) -> int:
        return self.alphabet_max + 1 if self.kind == "onehot" else 1

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X)
        if self.kind == "onehot":
            return np.eye(self.alphabet_max + 1)[X.astype(np.int64)]
        if self.kind == "scalar":
            return (X.astype(np.float64) / self.alphabet_max)[..., None]
        return X.astype(np.float64)[..., None]


def pad_batch(sequences):
    """Right-pad integer sequences into a (B, T) array plus lengths."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    width = int(lengths.max()) if len(lengths) else 0
    X = np.zeros((len(sequences), width), dtype=np.int64)
    for i, s in enumerate(sequences):
        X[i, :len(s)] = s
    return X, lengths


@dataclass
class SequenceModel:
    """Recurrent cell, input encoding and output head.

    ``output`` says how to read the head: ``regression`` (raw value times
    ``output_scale``), ``logit`` (binary logit), ``prob`` (already a 0/1
    score, thresholded at 0.5).
    """

    cell: Cell
    head: MlpParams
    encoding: Encoding = field(default_factory=Encoding)
    output: str = "regression"
    output_scale: float = 1.0

    kind = "sequence"

    def parameters(self):
        return self.cell.parameters() + self.head.parameters()

    def initial_states(self, n: int) -> Tensor:
        return T.repeat_rows(self.cell.initial_state(), n)

    def final_states(self, X, lengths=None, S=None) -> Tensor:
        """Fold integer sequences ``X`` (B, T) from ``S`` (default ``s0``)."""
        X = np.asarray(X)
        if S is None:
            S = self.initial_states(X.shape[0])
        if X.shape[1] == 0:
            return S
        return self.cell.fold(S, self.encoding(X), lengths)

    def readout(self, S: Tensor) -> Tensor:
        y = T.reshape(self.head.forward(S), (-1,))
        return T.scale(y, self.output_scale) if self.output_scale != 1.0 else y

    def forward(self, X, lengths=None) -> Tensor:
        return self.readout(self.final_states(X, lengths))

    def state(self, xs) -> np.ndarray:
        X, lengths = pad_batch([list(xs)])
        with T.no_grad():
            return self.final_states(X, lengths).data[0]


def deepsets_canonical_order(X, lengths):
    """Stable sort of each row's valid prefix; padding stays at the end."""
    X = np.array(X, copy=True)
    for i, n in enumerate(lengths):
        X[i, :n] = np.sort(X[i, :n], kind="stable")
    return X


@dataclass
class DeepSetsParams:
    phi: MlpParams
    rho: MlpParams

    def __post_init__(self):
        if self.phi.out_width != self.rho.in_width:
            raise DimensionError(f"phi emits width {self.phi.out_width}, rho expects {self.rho.in_width}")

    def parameters(self):
        return self.phi.parameters() + self.rho.parameters()


def _pool(phi: MlpParams, feats: np.ndarray, seg: np.ndarray, n_sets: int) -> Tensor:
    return T.segment_sum(phi.forward(Tensor._wrap(feats)), seg, n_sets)


def deepsets_forward(params: DeepSetsParams, xs) -> Tensor:
    """``rho(sum_i phi(x_i))`` for one set given as rows of ``xs`` (n, d).

    Elements are summed in a canonical (lexicographically sorted) order, so any
    permutation of ``xs`` gives a bit-identical result.
    """
    xs = np.asarray([x.data if isinstance(x, Tensor) else x for x in xs], dtype=np.float64)
    if xs.shape[0] == 0:
        raise ContractError("deepsets_forward needs a non-empty set")
    if xs.ndim == 1:
        xs = xs[:, None]
    order = np.lexsort(xs.T[::-1])
    pooled = _pool(params.phi, xs[order], np.zeros(len(xs), dtype=np.intp), 1)
    return T.reshape(params.rho.forward(pooled), (-1,))


@dataclass
class DeepSetsModel:
    """DeepSets over integer sequences, same calling surface as SequenceModel."""

    params: DeepSetsParams
    encoding: Encoding = field(default_factory=Encoding)
    output: str = "regression"
    output_scale: float = 1.0

    kind = "deepsets"

    def parameters(self):
        return self.params.parameters()

    def final_states(self, X, lengths=None, S=None) -> Tensor:
        """Pooled representation ``sum_i phi(x_i)`` per row, added to ``S`` if given."""
        X = np.asarray(X)
        B, width = X.shape
        lengths = np.full(B, width) if lengths is None else np.asarray(lengths)
        X = deepsets_canonical_order(X, lengths)
        valid = np.arange(width)[None, :] < lengths[:, None]
        seg = np.nonzero(valid)[0]
        feats = self.encoding(X[valid])
        pooled = _pool(self.params.phi, feats, seg, B)
        return pooled if S is None else T.add(S, pooled)

    def readout(self, S: Tensor) -> Tensor:
        y = T.reshape(self.params.rho.forward(S), (-1,))
        return T.scale(y, self.output_scale) if self.output_scale != 1.0 else y

    def forward(self, X, lengths=None) -> Tensor:
        return self.readout(self.final_states(X, lengths))

    def state(self, xs) -> np.ndarray:
        X, lengths = pad_batch([list(xs)])
        with T.no_grad():
            return self.final_states(X, lengths).data[0]


# ---------------------------------------------------------------------------
# construction helpers


def make_rnn_model(input_encoding: Encoding, hidden: int, state_size: int, rng,
                   activation="tanh", head_hidden=(), output="regression", output_scale=1.0):
    cell = RnnCell(RnnParams.init(input_encoding.width, hidden, state_size, rng, activation))
    head = MlpParams.init([state_size, *head_hidden, 1], rng)
    return SequenceModel(cell, head, input_encoding, output, output_scale)


def make_gru_model(input_encoding: Encoding, hidden: int, rng, head_hidden=(), output="regression",
                   output_scale=1.0):
    cell = GruCell(GruParams.init(input_encoding.width, hidden, rng))
    head = MlpParams.init([hidden, *head_hidden, 1], rng)
    return SequenceModel(cell, head, input_encoding, output, output_scale)


def make_deepsets_model(input_encoding: Encoding, width: int, rng, output="regression", output_scale=1.0,
                        phi_hidden=1, rho_hidden=1):
    """phi: enc -> width (x phi_hidden hidden layers) -> width; rho: width -> ... -> 1."""
    phi = MlpParams.init([input_encoding.width] + [width] * (phi_hidden + 1), rng, final_activation="relu")
    rho = MlpParams.init([width] * (rho_hidden + 1) + [1], rng)
    return DeepSetsModel(DeepSetsParams(phi, rho), input_encoding, output, output_scale)


# ---------------------------------------------------------------------------
# text serialization

_MAGIC = "permrnn-model 1"


def _fmt_tensor(name, t: Tensor):
    dims = " ".join(str(d) for d in t.shape)
    vals = " ".join(repr(float(v)) for v in t.data.reshape(-1))
    return [f"tensor {name} {dims}".rstrip(), vals]


def _mlp_lines(prefix, mlp: MlpParams):
    lines = [f"{prefix}.layers {len(mlp.layers)} {mlp.width if mlp.width is not None else -1}",
             f"{prefix}.activations {' '.join(mlp.activations)}".rstrip()]
    for i, (w, b) in enumerate(mlp.layers):
        lines += _fmt_tensor(f"{prefix}.{i}.W", w) + _fmt_tensor(f"{prefix}.{i}.b", b)
    return lines


def dumps_model(model) -> str:
    """Serialize a model to text; floats use shortest round-trip repr."""
    enc = model.encoding
    lines = [_MAGIC]
    if isinstance(model, DeepSetsModel):
        lines.append("kind deepsets")
    elif isinstance(model.cell, RnnCell):
        lines += ["kind rnn", f"activation {model.cell.params.activation}"]
    elif isinstance(model.cell, GruCell):
        lines.append("kind gru")
    else:
        raise UnsupportedError(f"cannot serialize cell {type(model.cell).__name__}")
    lines += [f"encoding {enc.kind} {enc.alphabet_max}", f"output {model.output}",
              f"output_scale {model.output_scale!r}"]
    if isinstance(model, DeepSetsModel):
        lines += _mlp_lines("phi", model.params.phi) + _mlp_lines("rho", model.params.rho)
    else:
        p = model.cell.params
        names = ["W_out", "W_x", "W_s", "B", "s0"] if isinstance(p, RnnParams) else \
            ["W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_n", "U_n", "b_n", "s0"]
        for name in names:
            lines += _fmt_tensor(name, getattr(p, name))
        lines += _mlp_lines("head", model.head)
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_model(text: str):
    try:
        return _loads_model(text)
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, (ContractError, UnsupportedError, DimensionError)):
            raise
        raise ContractError(f"malformed model document: {exc!r}") from None


def _loads_model(text: str):
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ContractError("not a permrnn model document")
    meta, tensors, pos = {}, {}, 1
    while pos < len(lines) and lines[pos] != "end":
        parts = lines[pos].split()
        if parts[0] == "tensor":
            shape = tuple(int(d) for d in parts[2:])
            vals = np.array([float(v) for v in lines[pos + 1].split()], dtype=np.float64)
            tensors[parts[1]] = _param(vals.reshape(shape))
            pos += 2
        else:
            meta[parts[0]] = parts[1:]
            pos += 1
    if pos >= len(lines):
        raise ContractError("model document is truncated (no 'end' line)")

    def mlp(prefix):
        n, width = (int(v) for v in meta[f"{prefix}.layers"])
        acts = meta.get(f"{prefix}.activations", [])
        if n == 0:
            return MlpParams.identity(width)
        return MlpParams([(tensors[f"{prefix}.{i}.W"], tensors[f"{prefix}.{i}.b"]) for i in range(n)], acts)

    kind = meta["kind"][0]
    enc = Encoding(meta["encoding"][0], int(meta["encoding"][1]))
    output = meta["output"][0]
    scale = float(meta["output_scale"][0])
    if kind == "deepsets":
        return DeepSetsModel(DeepSetsParams(mlp("phi"), mlp("rho")), enc, output, scale)
    if kind == "rnn":
        p = RnnParams(*(tensors[n] for n in ("W_out", "W_x", "W_s", "B", "s0")), activation=meta["activation"][0])
        return SequenceModel(RnnCell(p), mlp("head"), enc, output, scale)
    if kind == "gru":
        names = ["W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_n", "U_n", "b_n", "s0"]
        return SequenceModel(GruCell(GruParams(*(tensors[n] for n in names))), mlp("head"), enc, output, scale)
    raise UnsupportedError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
