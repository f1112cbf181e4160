"""Pure numpy sequence-fold kernels (fallback for the compiled extension).

Shapes, for batch ``B``, steps ``T``, input width ``d``, hidden width ``h`` and
state width ``k``:

* ``X``: (B, T, d) inputs, rows shorter than ``T`` are padded and masked by
  ``lengths``; for ``t >= lengths[b]`` the state of row ``b`` is carried over.
* returned state trace ``S``: (T + 1, B, k) with ``S[0] = S0``.
"""

import numpy as np


def rnn_forward(Wx, Ws, b, Wout, S0, X, lengths, use_relu):
    B, T, _ = X.shape
    h = Wx.shape[0]
    S = np.empty((T + 1,) + S0.shape)
    A = np.empty((T, B, h))
    S[0] = S0
    for t in range(T):
        pre = X[:, t] @ Wx.T + S[t] @ Ws.T + b
        a = np.maximum(pre, 0.0) if use_relu else np.tanh(pre)
        A[t] = a
        new = a @ Wout.T
        active = (t < lengths)[:, None]
        S[t + 1] = np.where(active, new, S[t])
    return S, A


def rnn_backward(Wx, Ws, Wout, S, A, X, lengths, use_relu, dS):
    T = X.shape[1]
    dWx = np.zeros_like(Wx)
    dWs = np.zeros_like(Ws)
    db = np.zeros(Wx.shape[0])
    dWout = np.zeros_like(Wout)
    dS = np.array(dS, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        m = (t < lengths)[:, None]
        g = np.where(m, dS, 0.0)
        carry = np.where(m, 0.0, dS)
        a = A[t]
        dWout += g.T @ a
        da = g @ Wout
        dpre = da * (a > 0) if use_relu else da * (1.0 - a * a)
        dWx += dpre.T @ X[:, t]
        dWs += dpre.T @ S[t]
        db += dpre.sum(axis=0)
        dS = dpre @ Ws + carry
    return dWx, dWs, db, dWout, dS


def _sig(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gru_forward(Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn, S0, X, lengths):
    B, T, _ = X.shape
    h = Wz.shape[0]
    S = np.empty((T + 1, B, h))
    Z = np.empty((T, B, h))
    R = np.empty((T, B, h))
    N = np.empty((T, B, h))
    S[0] = S0
    for t in range(T):
        x, s = X[:, t], S[t]
        z = _sig(x @ Wz.T + s @ Uz.T + bz)
        r = _sig(x @ Wr.T + s @ Ur.T + br)
        n = np.tanh(x @ Wn.T + (r * s) @ Un.T + bn)
        Z[t], R[t], N[t] = z, r, n
        new = (1.0 - z) * n + z * s
        S[t + 1] = np.where((t < lengths)[:, None], new, s)
    return S, Z, R, N


def gru_backward(Wz, Uz, Wr, Ur, Wn, Un, S, Z, R, N, X, lengths, dS):
    T = X.shape[1]
    grads = {k: np.zeros_like(v) for k, v in
             (("Wz", Wz), ("Uz", Uz), ("Wr", Wr), ("Ur", Ur), ("Wn", Wn), ("Un", Un))}
    h = Wz.shape[0]
    dbz, dbr, dbn = np.zeros(h), np.zeros(h), np.zeros(h)
    dS = np.array(dS, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        m = (t < lengths)[:, None]
        g = np.where(m, dS, 0.0)
        carry = np.where(m, 0.0, dS)
        x, s, z, r, n = X[:, t], S[t], Z[t], R[t], N[t]
        dz = g * (s - n)
        dn = g * (1.0 - z)
        ds = g * z
        dpn = dn * (1.0 - n * n)
        rs = r * s
        grads["Wn"] += dpn.T @ x
        grads["Un"] += dpn.T @ rs
        dbn += dpn.sum(axis=0)
        drs = dpn @ Un
        dr = drs * s
        ds += drs * r
        dpz = dz * z * (1.0 - z)
        grads["Wz"] += dpz.T @ x
        grads["Uz"] += dpz.T @ s
        dbz += dpz.sum(axis=0)
        ds += dpz @ Uz
        dpr = dr * r * (1.0 - r)
        grads["Wr"] += dpr.T @ x
        grads["Ur"] += dpr.T @ s
        dbr += dpr.sum(axis=0)
        ds += dpr @ Ur
        dS = ds + carry
    return (grads["Wz"], grads["Uz"], dbz, grads["Wr"], grads["Ur"], dbr,
            grads["Wn"], grads["Un"], dbn, dS)
