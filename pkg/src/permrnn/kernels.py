"""Fused recurrent folds as single tape operations.

The inner loop over time steps runs in the compiled ``_kernels`` extension
when it is importable and in ``_kernels_py`` otherwise. Setting the
environment variable ``PERMRNN_PURE=1`` forces the numpy fallback.

The compiled loops are plain triple loops, so for wide cells the numpy
version (which hands the matrix products to BLAS) is faster. Without an
explicit ``impl`` a fold uses the compiled kernel only while its
multiply-adds per step (over the whole batch) stay under ``COMPILED_MAX_WORK``; see
``benchmarks/bench_kernels.py`` for the crossover.
"""

import os

import numpy as np

from . import _kernels_py
from .tensor import Tensor, _result

if os.environ.get("PERMRNN_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


COMPILED_MAX_WORK = 50_000


def _pick(impl, work):
    if impl is not None:
        return impl
    return _impl if work <= COMPILED_MAX_WORK else _kernels_py


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _lengths(lengths, B, T):
    if lengths is None:
        return np.full(B, T, dtype=np.int64)
    return np.ascontiguousarray(lengths, dtype=np.int64)


def rnn_fold(Wx: Tensor, Ws: Tensor, b: Tensor, Wout: Tensor, S0: Tensor, X, lengths=None,
             activation="tanh", impl=None, trace=False):
    """Fold ``s <- Wout @ act(Wx x + Ws s + b)`` over the rows of ``X``.

    ``S0`` is (B, k), ``X`` is (B, T, d) plain data. Returns the final states
    as a differentiable (B, k) tensor, plus the (T + 1, B, k) state trace when
    ``trace`` is set.
    """
    X = _c(X)
    B, T, _ = X.shape
    h, k = Ws.shape
    impl = _pick(impl, B * h * (Wx.shape[1] + 2 * k))
    L = _lengths(lengths, B, T)
    use_relu = activation == "relu"
    w = [_c(p.data) for p in (Wx, Ws, b, Wout)]
    S, A = impl.rnn_forward(w[0], w[1], w[2], w[3], _c(S0.data), X, L, use_relu)

    def rule(g):
        dWx, dWs, db, dWout, dS0 = impl.rnn_backward(w[0], w[1], w[3], S, A, X, L, use_relu, g)
        return dWx, dWs, db, dWout, dS0

    out = _result("rnn_fold", S[T].copy(), (Wx, Ws, b, Wout, S0), rule)
    return (out, S) if trace else out


def gru_fold(weights, S0: Tensor, X, lengths=None, impl=None, trace=False):
    """GRU fold; ``weights`` is (Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn)."""
    X = _c(X)
    B, T, _ = X.shape
    h, d = weights[0].shape
    impl = _pick(impl, 3 * B * h * (d + h))
    L = _lengths(lengths, B, T)
    w = [_c(p.data) for p in weights]
    S, Z, R, N = impl.gru_forward(*w, _c(S0.data), X, L)

    def rule(g):
        return impl.gru_backward(w[0], w[1], w[3], w[4], w[6], w[7], S, Z, R, N, X, L, g)

    out = _result("gru_fold", S[T].copy(), tuple(weights) + (S0,), rule)
    return (out, S) if trace else out
