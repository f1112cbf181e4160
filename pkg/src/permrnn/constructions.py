"""Hand-built networks and the piecewise-linear analysis behind the size gap.

* a three-unit ReLU RNN whose update is XOR, hence computes parity;
* the reduction of any DeepSets model on binary inputs to one whose
  element network is the identity;
* exact segment tracing for scalar ReLU nets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError, UnsupportedError
from .models import (DeepSetsParams, Encoding, MlpParams, RnnCell, RnnParams, SequenceModel,
                     deepsets_forward)
from .tensor import Tensor


def build_parity_rnn() -> RnnParams:
    """``s' = [1,-1,-1] . relu(2x + 2s + [0,-1,-3])``, i.e. ``(s + x) mod 2`` on bits."""
    return RnnParams(
        W_out=Tensor([[1.0, -1.0, -1.0]], requires_grad=True),
        W_x=Tensor([[2.0], [2.0], [2.0]], requires_grad=True),
        W_s=Tensor([[2.0], [2.0], [2.0]], requires_grad=True),
        B=Tensor([0.0, -1.0, -3.0], requires_grad=True),
        s0=Tensor([0.0], requires_grad=True),
        activation="relu",
    )


def parity_model() -> SequenceModel:
    """The exact parity RNN with an identity head; outputs are 0/1 scores."""
    return SequenceModel(RnnCell(build_parity_rnn()), MlpParams.identity(1), Encoding("raw", 1), output="prob")


def parity_oracle(xs) -> int:
    xs = [int(x) for x in xs]
    if any(x not in (0, 1) for x in xs):
        raise ContractError(f"parity is defined on bits, got {xs}")
    return sum(xs) % 2


def all_binary_sequences(length: int) -> np.ndarray:
    """All 2**length bit strings as rows, in counting order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    codes = np.arange(2 ** length, dtype=np.int64)
    return (codes[:, None] >> np.arange(length - 1, -1, -1)) & 1


@dataclass
class ParitySelfTest:
    passed: bool
    sequences: int
    max_deviation: float
    mismatches: int


def exhaustive_parity_check(model: SequenceModel, max_len: int = 16, tol: float = 1e-9) -> ParitySelfTest:
    """Compare ``model`` to the parity oracle on every bit string up to ``max_len``.

    A sequence passes when the thresholded output equals its parity and the raw
    output lies within ``tol`` of that bit.
    """
    total, worst, bad = 0, 0.0, 0
    with T.no_grad():
        for n in range(max_len + 1):
            X = all_binary_sequences(n)
            y = model.forward(X).data
            target = X.sum(axis=1) % 2
            dev = np.abs(y - target)
            worst = max(worst, float(dev.max()))
            bad += int(np.count_nonzero((y >= 0.5).astype(int) != target) + np.count_nonzero(dev > tol))
            total += len(X)
    return ParitySelfTest(bad == 0, total, worst, bad)


# ---------------------------------------------------------------------------
# binary DeepSets reduction


class ReducedRho:
    """``rho~(z) = rho(n v0 + z (v1 - v0))`` where ``v_b = phi(b)``.

    Evaluated at the count of ones ``z`` it reproduces the DeepSets output on
    any binary multiset of size ``n``.
    """

    def __init__(self, phi: MlpParams, rho: MlpParams, n: int):
        with T.no_grad():
            v = phi.forward(Tensor([[0.0], [1.0]])).data
        self.v0, self.v1 = v[0], v[1]
        self.n = n
        self.rho = rho

    def pooled(self, z) -> np.ndarray:
        return self.n * self.v0 + z * (self.v1 - self.v0)

    def __call__(self, z) -> np.ndarray:
        with T.no_grad():
            return self.rho(Tensor(self.pooled(z))).data


def reduce_binary_deepsets(phi: MlpParams, rho: MlpParams, n: int) -> ReducedRho:
    if n < 1:
        raise ContractError("set size must be at least 1")
    if phi.in_width != 1:
        raise DimensionError(f"phi must take a scalar input, takes width {phi.in_width}")
    DeepSetsParams(phi, rho)  # width check
    return ReducedRho(phi, rho, n)


def reduction_mismatch(params: DeepSetsParams, max_len: int) -> float:
    """Largest |rho~(n1) - deepsets(xs)| over all bit strings of length 1..max_len."""
    worst = 0.0
    with T.no_grad():
        for n in range(1, max_len + 1):
            red = reduce_binary_deepsets(params.phi, params.rho, n)
            for row in all_binary_sequences(n):
                full = deepsets_forward(params, row[:, None].astype(float)).data
                worst = max(worst, float(np.max(np.abs(red(int(row.sum())) - full))))
    return worst


# ---------------------------------------------------------------------------
# piecewise-linear tracing

SLOPE_TOL = 1e-9


@dataclass
class PiecewiseLinear1D:
    """Continuous piecewise-linear map on ``[lo, hi]``.

    ``slopes[i]`` holds on the i-th maximal segment; ``breakpoints`` are the
    interior kinks in increasing order.
    """

    lo: float
    hi: float
    breakpoints: list
    slopes: list
    left_value: float

    @property
    def num_segments(self) -> int:
        return len(self.slopes)

    def _knots(self):
        xs = np.array([self.lo, *self.breakpoints])
        vals = np.empty(len(xs))
        vals[0] = self.left_value
        for i in range(1, len(xs)):
            vals[i] = vals[i - 1] + self.slopes[i - 1] * (xs[i] - xs[i - 1])
        return xs, vals

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        xs, vals = self._knots()
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 1)
        return vals[k] + np.asarray(self.slopes)[k] * (x - xs[k])


def trace_piecewise_linear(net: MlpParams, lo: float, hi: float) -> PiecewiseLinear1D:
    """Exact segment decomposition of a scalar ReLU net on ``[lo, hi]``.

    Each layer's pre-activations are affine on every current interval; a ReLU
    unit adds a breakpoint where its pre-activation changes sign inside the
    interval. Neighbouring segments whose slopes agree within ``SLOPE_TOL``
    are merged at the end.
    """
    if not lo < hi:
        raise ContractError(f"empty domain [{lo}, {hi}]")
    if net.in_width != 1 or net.out_width != 1:
        raise DimensionError("segment tracing needs a scalar-input, scalar-output net")
    for act in net.activations:
        if act not in ("relu", "identity"):
            raise UnsupportedError(f"cannot trace through {act!r} units")

    edges = [float(lo), float(hi)]
    A = np.ones((1, 1))  # per interval: d unit / dx
    C = np.zeros((1, 1))  # per interval: unit value at x = 0
    eps = 1e-12 * (hi - lo)
    for (w, b), act in zip(net.layers, net.activations):
        W, bias = w.data, b.data
        A, C = A @ W.T, C @ W.T + bias
        if act != "relu":
            continue
        new_edges, new_A, new_C = [edges[0]], [], []
        for i in range(len(edges) - 1):
            left, right = edges[i], edges[i + 1]
            a, c = A[i], C[i]
            nz = a != 0
            roots = -c[nz] / a[nz]
            roots = np.unique(roots[(roots > left + eps) & (roots < right - eps)])
            cuts = [left, *roots.tolist(), right]
            for l, r in zip(cuts, cuts[1:]):
                mid = 0.5 * (l + r)
                on = (a * mid + c) > 0
                new_A.append(a * on)
                new_C.append(c * on)
                new_edges.append(r)
        edges, A, C = new_edges, np.array(new_A), np.array(new_C)

    slope, icpt = A[:, 0], C[:, 0]
    knots_x = [edges[0]]
    knots_v = [slope[0] * edges[0] + icpt[0]]
    kept = [0]
    for i in range(1, len(slope)):
        if np.abs(slope[i] - slope[kept[-1]]) > SLOPE_TOL:
            kept.append(i)
            knots_x.append(edges[i])
            knots_v.append(slope[i] * edges[i] + icpt[i])
    knots_x.append(edges[-1])
    knots_v.append(slope[-1] * edges[-1] + icpt[-1])
    secants = [(knots_v[i + 1] - knots_v[i]) / (knots_x[i + 1] - knots_x[i]) for i in range(len(kept))]
    return PiecewiseLinear1D(float(lo), float(hi), knots_x[1:-1], secants, float(knots_v[0]))


def min_deepsets_units(n: int) -> int:
    """``4 log2 n`` ReLU units: the cheapest depth/width split with ``r**L >= n``."""
    n = int(n)
    if n < 1 or n & (n - 1):
        raise ContractError(f"set size must be a power of two, got {n}")
    k = n.bit_length() - 1
    if k <= 4:
        raise ContractError(f"the bound is stated for n = 2**K with K > 4, got K = {k}")
    return 4 * k
