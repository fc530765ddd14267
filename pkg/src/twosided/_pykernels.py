"""numpy implementation of the batched two-sided kernels.

Reference backend; the Cython module ``_ckernels`` exposes the same functions.
``loss_code`` is 0 for squared loss and 1 for hinge loss.
"""
import numpy as np


def predict(P, Q, X, Z, use_relu):
    A = Z @ Q
    G = np.maximum(A, 0.0) if use_relu else A
    return np.einsum("nk,nk->n", X @ P, G)


def batch_loss_grad(P, Q, X, Z, y, w, loss_code, use_relu):
    """Weighted loss sum and its gradients over a batch.

    Returns ``(sum_i w_i * L_i, dP, dQ)`` where ``dP`` and ``dQ`` are the
    gradients of that weighted sum.
    """
    H = X @ P
    A = Z @ Q
    if use_relu:
        G = np.maximum(A, 0.0)
        Dact = (A > 0.0).astype(np.float64)
    else:
        G = A
        Dact = None
    yhat = np.einsum("nk,nk->n", H, G)
    if loss_code == 0:
        r = yhat - y
        total = float(np.dot(w, r * r))
        s = 2.0 * r * w
    else:
        margin = 1.0 - y * yhat
        active = margin > 0.0
        total = float(np.dot(w, np.where(active, margin, 0.0)))
        s = np.where(active, -y, 0.0) * w
    dP = X.T @ (s[:, None] * G)
    HS = s[:, None] * H
    if Dact is not None:
        HS *= Dact
    dQ = Z.T @ HS
    return total, dP, dQ


def batch_loss(P, Q, X, Z, y, w, loss_code, use_relu):
    yhat = predict(P, Q, X, Z, use_relu)
    if loss_code == 0:
        r = yhat - y
        return float(np.dot(w, r * r))
    return float(np.dot(w, np.maximum(0.0, 1.0 - y * yhat)))


# regulariser codes shared with the compiled kernels
REG_CODES = {"none": 0, "frobenius": 1, "l1": 2, "l21": 3}


def reg_subgrad_rows(code, W):
    """Subgradient of the norm ``code`` at ``W``; ``l21`` groups the rows."""
    if code == 1:
        n = np.sqrt((W * W).sum())
        return W / n if n > 0 else np.zeros_like(W)
    if code == 2:
        return np.sign(W)
    if code == 3:
        rows = np.sqrt((W * W).sum(axis=1, keepdims=True))
        return np.divide(W, rows, out=np.zeros_like(W), where=rows > 0)
    return np.zeros_like(W)


def sgd_epoch(P, Q, vP, vQ, X, Z, y, w, batch_size, lr, momentum, loss_code, use_relu,
              p_fixed, mask, reg_p, lam_p, reg_q, lam_q):
    """One pass of minibatch SGD with momentum over pre-shuffled rows.

    ``P``, ``Q`` and the velocities are updated in place. The penalty on
    ``P`` uses its rows as groups; the penalty on ``Q`` is applied to ``Q.T``.
    """
    n = X.shape[0]
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        m = min(batch_size, n - start)
        _, gP, gQ = batch_loss_grad(P, Q, X[sl], Z[sl], y[sl], w[sl], loss_code, use_relu)
        if not p_fixed:
            gP /= m
            if reg_p and lam_p > 0.0:
                gP += lam_p * reg_subgrad_rows(reg_p, P)
            vP *= momentum
            vP -= lr * gP
            P += vP
        gQ /= m
        if reg_q and lam_q > 0.0:
            gQ += lam_q * reg_subgrad_rows(reg_q, Q.T).T
        if mask is not None:
            gQ *= mask
        vQ *= momentum
        vQ -= lr * gQ
        Q += vQ
