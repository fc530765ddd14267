# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched kernels for the two-sided model.

Same contract as ``twosided._pykernels``. Zero entries of the descriptor
rows are skipped, which makes one-hot and distributed codes cheap.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline void _hidden(const double[:, ::1] P, const double[:, ::1] Q,
                         const double[:, ::1] X, const double[:, ::1] Z,
                         Py_ssize_t i, double* h, double* a) noexcept nogil:
    cdef Py_ssize_t D = P.shape[0], K = P.shape[1], B = Q.shape[0]
    cdef Py_ssize_t d, b, k
    cdef double v
    for k in range(K):
        h[k] = 0.0
        a[k] = 0.0
    for d in range(D):
        v = X[i, d]
        if v != 0.0:
            for k in range(K):
                h[k] += v * P[d, k]
    for b in range(B):
        v = Z[i, b]
        if v != 0.0:
            for k in range(K):
                a[k] += v * Q[b, k]


def predict(P, Q, X, Z, bint use_relu):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], K = Pv.shape[1]
    cdef Py_ssize_t i, k
    cdef double acc, g
    out = np.empty(N, dtype=np.float64)
    cdef double[::1] outv = out
    cdef double[::1] h = np.empty(K, dtype=np.float64)
    cdef double[::1] a = np.empty(K, dtype=np.float64)
    with nogil:
        for i in range(N):
            _hidden(Pv, Qv, Xv, Zv, i, &h[0], &a[0])
            acc = 0.0
            for k in range(K):
                g = a[k]
                if use_relu and g < 0.0:
                    g = 0.0
                acc += h[k] * g
            outv[i] = acc
    return out


def batch_loss_grad(P, Q, X, Z, y, w, int loss_code, bint use_relu):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], D = Pv.shape[0], K = Pv.shape[1], B = Qv.shape[0]
    cdef Py_ssize_t i, d, b, k
    cdef double yhat, r, s, margin, v, total = 0.0
    dP_arr = np.zeros((D, K), dtype=np.float64)
    dQ_arr = np.zeros((B, K), dtype=np.float64)
    cdef double[:, ::1] dP = dP_arr
    cdef double[:, ::1] dQ = dQ_arr
    cdef double[::1] h = np.empty(K, dtype=np.float64)
    cdef double[::1] a = np.empty(K, dtype=np.float64)
    cdef double[::1] g = np.empty(K, dtype=np.float64)
    cdef double[::1] hq = np.empty(K, dtype=np.float64)
    with nogil:
        for i in range(N):
            _hidden(Pv, Qv, Xv, Zv, i, &h[0], &a[0])
            yhat = 0.0
            for k in range(K):
                if use_relu:
                    g[k] = a[k] if a[k] > 0.0 else 0.0
                    hq[k] = h[k] if a[k] > 0.0 else 0.0
                else:
                    g[k] = a[k]
                    hq[k] = h[k]
                yhat += h[k] * g[k]
            if loss_code == 0:
                r = yhat - yv[i]
                total += wv[i] * r * r
                s = 2.0 * r * wv[i]
            else:
                margin = 1.0 - yv[i] * yhat
                if margin > 0.0:
                    total += wv[i] * margin
                    s = -yv[i] * wv[i]
                else:
                    s = 0.0
            if s == 0.0:
                continue
            for d in range(D):
                v = s * Xv[i, d]
                if v != 0.0:
                    for k in range(K):
                        dP[d, k] += v * g[k]
            for b in range(B):
                v = s * Zv[i, b]
                if v != 0.0:
                    for k in range(K):
                        dQ[b, k] += v * hq[k]
    return total, dP_arr, dQ_arr


def batch_loss(P, Q, X, Z, y, w, int loss_code, bint use_relu):
    cdef double[::1] yhat = predict(P, Q, X, Z, use_relu)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t i, N = yhat.shape[0]
    cdef double r, total = 0.0
    for i in range(N):
        if loss_code == 0:
            r = yhat[i] - yv[i]
            total += wv[i] * r * r
        else:
            r = 1.0 - yv[i] * yhat[i]
            if r > 0.0:
                total += wv[i] * r
    return total


cdef double _fro(double[:, ::1] W) noexcept nogil:
    cdef Py_ssize_t R = W.shape[0], C = W.shape[1], r, c
    cdef double s = 0.0
    for r in range(R):
        for c in range(C):
            s += W[r, c] * W[r, c]
    return sqrt(s)


cdef void _add_reg(double[:, ::1] G, double[:, ::1] W, int code, double lam,
                   bint transpose, double* buf) noexcept nogil:
    """G += lam * subgrad(norm)(W), with l21 groups taken over rows of W
    (or of W.T when ``transpose``)."""
    cdef Py_ssize_t R = W.shape[0], C = W.shape[1], r, c
    cdef double n, v
    if code == 1:
        n = _fro(W)
        if n > 0.0:
            for r in range(R):
                for c in range(C):
                    G[r, c] += lam * W[r, c] / n
    elif code == 2:
        for r in range(R):
            for c in range(C):
                v = W[r, c]
                if v > 0.0:
                    G[r, c] += lam
                elif v < 0.0:
                    G[r, c] -= lam
    elif code == 3:
        if transpose:
            for c in range(C):
                buf[c] = 0.0
            for r in range(R):
                for c in range(C):
                    buf[c] += W[r, c] * W[r, c]
            for c in range(C):
                buf[c] = sqrt(buf[c])
            for r in range(R):
                for c in range(C):
                    if buf[c] > 0.0:
                        G[r, c] += lam * W[r, c] / buf[c]
        else:
            for r in range(R):
                n = 0.0
                for c in range(C):
                    n += W[r, c] * W[r, c]
                n = sqrt(n)
                if n > 0.0:
                    for c in range(C):
                        G[r, c] += lam * W[r, c] / n


def sgd_epoch(P, Q, vP, vQ, X, Z, y, w, Py_ssize_t batch_size, double lr, double momentum,
              int loss_code, bint use_relu, bint p_fixed, mask, int reg_p, double lam_p,
              int reg_q, double lam_q):
    cdef double[:, ::1] Pv = P
    cdef double[:, ::1] Qv = Q
    cdef double[:, ::1] vPv = vP
    cdef double[:, ::1] vQv = vQ
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef bint has_mask = mask is not None
    cdef const double[:, ::1] Mv = np.ascontiguousarray(
        mask if has_mask else np.ones((1, 1)), dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], D = Pv.shape[0], K = Pv.shape[1], B = Qv.shape[0]
    cdef Py_ssize_t start, stop, i, d, b, k
    cdef double yhat, s, v, margin, inv_m
    cdef double[:, ::1] gP = np.zeros((D, K), dtype=np.float64)
    cdef double[:, ::1] gQ = np.zeros((B, K), dtype=np.float64)
    cdef double[::1] h = np.empty(K, dtype=np.float64)
    cdef double[::1] a = np.empty(K, dtype=np.float64)
    cdef double[::1] g = np.empty(K, dtype=np.float64)
    cdef double[::1] hq = np.empty(K, dtype=np.float64)
    cdef double[::1] buf = np.empty(K, dtype=np.float64)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    with nogil:
        start = 0
        while start < N:
            stop = start + batch_size
            if stop > N:
                stop = N
            for d in range(D):
                for k in range(K):
                    gP[d, k] = 0.0
            for b in range(B):
                for k in range(K):
                    gQ[b, k] = 0.0
            for i in range(start, stop):
                _hidden(Pv, Qv, Xv, Zv, i, &h[0], &a[0])
                yhat = 0.0
                for k in range(K):
                    if use_relu:
                        g[k] = a[k] if a[k] > 0.0 else 0.0
                        hq[k] = h[k] if a[k] > 0.0 else 0.0
                    else:
                        g[k] = a[k]
                        hq[k] = h[k]
                    yhat += h[k] * g[k]
                if loss_code == 0:
                    s = 2.0 * (yhat - yv[i]) * wv[i]
                else:
                    margin = 1.0 - yv[i] * yhat
                    s = -yv[i] * wv[i] if margin > 0.0 else 0.0
                if s == 0.0:
                    continue
                if not p_fixed:
                    for d in range(D):
                        v = s * Xv[i, d]
                        if v != 0.0:
                            for k in range(K):
                                gP[d, k] += v * g[k]
                for b in range(B):
                    v = s * Zv[i, b]
                    if v != 0.0:
                        for k in range(K):
                            gQ[b, k] += v * hq[k]
            inv_m = 1.0 / (stop - start)
            # P and Q regularisers both see the parameters from before this step
            if not p_fixed:
                for d in range(D):
                    for k in range(K):
                        gP[d, k] *= inv_m
                if reg_p != 0 and lam_p > 0.0:
                    _add_reg(gP, Pv, reg_p, lam_p, False, &buf[0])
            for b in range(B):
                for k in range(K):
                    gQ[b, k] *= inv_m
            if reg_q != 0 and lam_q > 0.0:
                _add_reg(gQ, Qv, reg_q, lam_q, True, &buf[0])
            if not p_fixed:
                for d in range(D):
                    for k in range(K):
                        vPv[d, k] = momentum * vPv[d, k] - lr * gP[d, k]
                        Pv[d, k] += vPv[d, k]
            for b in range(B):
                for k in range(K):
                    if has_mask:
                        gQ[b, k] *= Mv[b, k]
                    vQv[b, k] = momentum * vQv[b, k] - lr * gQ[b, k]
                    Qv[b, k] += vQv[b, k]
            start = stop
