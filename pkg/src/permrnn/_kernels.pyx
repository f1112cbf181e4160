# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sequence-fold kernels. Same signatures as ``_kernels_py``."""

import numpy as np
from libc.math cimport exp, tanh


cdef inline double _sig(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def rnn_forward(double[:, ::1] Wx, double[:, ::1] Ws, double[::1] b, double[:, ::1] Wout,
                double[:, ::1] S0, double[:, :, ::1] X, long[::1] lengths, bint use_relu):
    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t h = Wx.shape[0], k = Ws.shape[1]
    S_arr = np.empty((T + 1, B, k))
    A_arr = np.empty((T, B, h))
    cdef double[:, :, ::1] S = S_arr
    cdef double[:, :, ::1] A = A_arr
    cdef Py_ssize_t t, i, j, q
    cdef double acc
    with nogil:
        for i in range(B):
            for q in range(k):
                S[0, i, q] = S0[i, q]
        for t in range(T):
            for i in range(B):
                if t >= lengths[i]:
                    for q in range(k):
                        S[t + 1, i, q] = S[t, i, q]
                    for j in range(h):
                        A[t, i, j] = 0.0
                    continue
                for j in range(h):
                    acc = b[j]
                    for q in range(d):
                        acc = acc + Wx[j, q] * X[i, t, q]
                    for q in range(k):
                        acc = acc + Ws[j, q] * S[t, i, q]
                    if use_relu:
                        A[t, i, j] = acc if acc > 0 else 0.0
                    else:
                        A[t, i, j] = tanh(acc)
                for q in range(k):
                    acc = 0.0
                    for j in range(h):
                        acc = acc + Wout[q, j] * A[t, i, j]
                    S[t + 1, i, q] = acc
    return S_arr, A_arr


def rnn_backward(double[:, ::1] Wx, double[:, ::1] Ws, double[:, ::1] Wout,
                 double[:, :, ::1] S, double[:, :, ::1] A, double[:, :, ::1] X,
                 long[::1] lengths, bint use_relu, dS_in):
    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t h = Wx.shape[0], k = Ws.shape[1]
    dWx_arr = np.zeros((h, d))
    dWs_arr = np.zeros((h, k))
    db_arr = np.zeros(h)
    dWout_arr = np.zeros((k, h))
    dS_arr = np.array(dS_in, dtype=np.float64, order="C")
    dpre_arr = np.empty(h)
    dnext_arr = np.empty(k)
    cdef double[:, ::1] dWx = dWx_arr
    cdef double[:, ::1] dWs = dWs_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dWout = dWout_arr
    cdef double[:, ::1] dS = dS_arr
    cdef double[::1] dpre = dpre_arr
    cdef double[::1] dnext = dnext_arr
    cdef Py_ssize_t t, i, j, q
    cdef double acc, a
    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(B):
                if t >= lengths[i]:
                    continue
                for j in range(h):
                    a = A[t, i, j]
                    acc = 0.0
                    for q in range(k):
                        dWout[q, j] += dS[i, q] * a
                        acc = acc + dS[i, q] * Wout[q, j]
                    if use_relu:
                        dpre[j] = acc if a > 0 else 0.0
                    else:
                        dpre[j] = acc * (1.0 - a * a)
                for j in range(h):
                    db[j] += dpre[j]
                    for q in range(d):
                        dWx[j, q] += dpre[j] * X[i, t, q]
                    for q in range(k):
                        dWs[j, q] += dpre[j] * S[t, i, q]
                for q in range(k):
                    acc = 0.0
                    for j in range(h):
                        acc = acc + dpre[j] * Ws[j, q]
                    dnext[q] = acc
                for q in range(k):
                    dS[i, q] = dnext[q]
    return dWx_arr, dWs_arr, db_arr, dWout_arr, dS_arr


def gru_forward(double[:, ::1] Wz, double[:, ::1] Uz, double[::1] bz,
                double[:, ::1] Wr, double[:, ::1] Ur, double[::1] br,
                double[:, ::1] Wn, double[:, ::1] Un, double[::1] bn,
                double[:, ::1] S0, double[:, :, ::1] X, long[::1] lengths):
    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t h = Wz.shape[0]
    S_arr = np.empty((T + 1, B, h))
    Z_arr = np.zeros((T, B, h))
    R_arr = np.zeros((T, B, h))
    N_arr = np.zeros((T, B, h))
    rs_arr = np.empty(h)
    cdef double[:, :, ::1] S = S_arr
    cdef double[:, :, ::1] Z = Z_arr
    cdef double[:, :, ::1] R = R_arr
    cdef double[:, :, ::1] N = N_arr
    cdef double[::1] rs = rs_arr
    cdef Py_ssize_t t, i, j, q
    cdef double az, ar, an
    with nogil:
        for i in range(B):
            for j in range(h):
                S[0, i, j] = S0[i, j]
        for t in range(T):
            for i in range(B):
                if t >= lengths[i]:
                    for j in range(h):
                        S[t + 1, i, j] = S[t, i, j]
                    continue
                for j in range(h):
                    az = bz[j]
                    ar = br[j]
                    for q in range(d):
                        az = az + Wz[j, q] * X[i, t, q]
                        ar = ar + Wr[j, q] * X[i, t, q]
                    for q in range(h):
                        az = az + Uz[j, q] * S[t, i, q]
                        ar = ar + Ur[j, q] * S[t, i, q]
                    Z[t, i, j] = _sig(az)
                    R[t, i, j] = _sig(ar)
                for q in range(h):
                    rs[q] = R[t, i, q] * S[t, i, q]
                for j in range(h):
                    an = bn[j]
                    for q in range(d):
                        an = an + Wn[j, q] * X[i, t, q]
                    for q in range(h):
                        an = an + Un[j, q] * rs[q]
                    N[t, i, j] = tanh(an)
                for j in range(h):
                    S[t + 1, i, j] = (1.0 - Z[t, i, j]) * N[t, i, j] + Z[t, i, j] * S[t, i, j]
    return S_arr, Z_arr, R_arr, N_arr


def gru_backward(double[:, ::1] Wz, double[:, ::1] Uz, double[:, ::1] Wr, double[:, ::1] Ur,
                 double[:, ::1] Wn, double[:, ::1] Un,
                 double[:, :, ::1] S, double[:, :, ::1] Z, double[:, :, ::1] R, double[:, :, ::1] N,
                 double[:, :, ::1] X, long[::1] lengths, dS_in):
    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t h = Wz.shape[0]
    out = [np.zeros((h, d)), np.zeros((h, h)), np.zeros(h),
           np.zeros((h, d)), np.zeros((h, h)), np.zeros(h),
           np.zeros((h, d)), np.zeros((h, h)), np.zeros(h)]
    cdef double[:, ::1] dWz = out[0]
    cdef double[:, ::1] dUz = out[1]
    cdef double[::1] dbz = out[2]
    cdef double[:, ::1] dWr = out[3]
    cdef double[:, ::1] dUr = out[4]
    cdef double[::1] dbr = out[5]
    cdef double[:, ::1] dWn = out[6]
    cdef double[:, ::1] dUn = out[7]
    cdef double[::1] dbn = out[8]
    dS_arr = np.array(dS_in, dtype=np.float64, order="C")
    cdef double[:, ::1] dS = dS_arr
    tmp = np.empty((6, h))
    cdef double[:, ::1] w = tmp
    # rows of w: dpn, dpz, dpr, drs, ds, rs
    cdef Py_ssize_t t, i, j, q
    cdef double g, z, r, n, s, acc
    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(B):
                if t >= lengths[i]:
                    continue
                for j in range(h):
                    g = dS[i, j]
                    z = Z[t, i, j]
                    n = N[t, i, j]
                    s = S[t, i, j]
                    w[0, j] = g * (1.0 - z) * (1.0 - n * n)
                    w[1, j] = g * (s - n) * z * (1.0 - z)
                    w[4, j] = g * z
                    w[5, j] = R[t, i, j] * s
                for q in range(h):
                    acc = 0.0
                    for j in range(h):
                        acc = acc + w[0, j] * Un[j, q]
                    w[3, q] = acc
                for q in range(h):
                    r = R[t, i, q]
                    w[2, q] = w[3, q] * S[t, i, q] * r * (1.0 - r)
                    w[4, q] = w[4, q] + w[3, q] * r
                for j in range(h):
                    dbn[j] += w[0, j]
                    dbz[j] += w[1, j]
                    dbr[j] += w[2, j]
                    for q in range(d):
                        dWn[j, q] += w[0, j] * X[i, t, q]
                        dWz[j, q] += w[1, j] * X[i, t, q]
                        dWr[j, q] += w[2, j] * X[i, t, q]
                    for q in range(h):
                        dUn[j, q] += w[0, j] * w[5, q]
                        dUz[j, q] += w[1, j] * S[t, i, q]
                        dUr[j, q] += w[2, j] * S[t, i, q]
                for q in range(h):
                    acc = w[4, q]
                    for j in range(h):
                        acc = acc + w[1, j] * Uz[j, q] + w[2, j] * Ur[j, q]
                    dS[i, q] = acc
    return tuple(out) + (dS_arr,)
