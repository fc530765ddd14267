import os
import subprocess
import sys

import numpy as np
import pytest

from twosided import _pykernels
from twosided.kernels import BACKEND, get_backend

try:
    from twosided import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def batch(rng, n=40, D=6, B=5, K=3, sparse=True):
    X = rng.normal(size=(n, D))
    Z = rng.normal(size=(n, B))
    if sparse:
        Z[rng.random(Z.shape) < 0.5] = 0.0
    P, Q = rng.normal(size=(D, K)), rng.normal(size=(B, K))
    return P, Q, X, Z


def reference(P, Q, X, Z, y, w, code, relu):
    """Per-instance loop over the model's own backward pass."""
    from twosided.core import loss, loss_grad
    from twosided.model import TwoSidedModel, backward, forward

    m = TwoSidedModel(P, Q, "relu" if relu else "linear")
    kind = ("squared", "hinge")[code]
    total, dP, dQ = 0.0, np.zeros_like(P), np.zeros_like(Q)
    for x, z, t, wi in zip(X, Z, y, w):
        yhat = forward(m, x, z)
        total += wi * loss(kind, yhat, t)
        g = backward(m, x, z, wi * loss_grad(kind, yhat, t))
        dP += g.dP
        dQ += g.dQ
    return total, dP, dQ


@pytest.mark.parametrize("code", [0, 1])
@pytest.mark.parametrize("relu", [True, False])
def test_python_kernel_matches_loop(rng, code, relu):
    P, Q, X, Z = batch(rng)
    y = rng.choice([-1.0, 1.0], size=len(X)) if code else rng.normal(size=len(X))
    w = rng.random(len(X)) + 0.5
    got = _pykernels.batch_loss_grad(P, Q, X, Z, y, w, code, relu)
    ref = reference(P, Q, X, Z, y, w, code, relu)
    for a, b in zip(got, ref):
        assert np.allclose(a, b, atol=1e-12, rtol=1e-12)
    assert np.isclose(_pykernels.batch_loss(P, Q, X, Z, y, w, code, relu), ref[0], rtol=1e-12)


@needs_ext
@pytest.mark.parametrize("code", [0, 1])
@pytest.mark.parametrize("relu", [True, False])
def test_backends_agree(rng, code, relu):
    for sparse in (True, False):
        P, Q, X, Z = batch(rng, sparse=sparse)
        y = rng.choice([-1.0, 1.0], size=len(X)) if code else rng.normal(size=len(X))
        w = rng.random(len(X))
        a = _pykernels.batch_loss_grad(P, Q, X, Z, y, w, code, relu)
        b = _ckernels.batch_loss_grad(P, Q, X, Z, y, w, code, relu)
        for u, v in zip(a, b):
            assert np.allclose(u, v, atol=1e-12, rtol=1e-12)
        assert np.allclose(_pykernels.predict(P, Q, X, Z, relu), _ckernels.predict(P, Q, X, Z, relu),
                           atol=1e-12)
        assert np.isclose(_pykernels.batch_loss(P, Q, X, Z, y, w, code, relu),
                          _ckernels.batch_loss(P, Q, X, Z, y, w, code, relu), rtol=1e-12)


@needs_ext
def test_backends_accept_non_contiguous(rng):
    P, Q, X, Z = batch(rng)
    Xf = np.asfortranarray(X)
    y = rng.normal(size=len(X))
    w = np.ones(len(X))
    a = _ckernels.batch_loss_grad(P, Q, Xf, Z[:, :], y, w, 0, True)
    b = _pykernels.batch_loss_grad(P, Q, X, Z, y, w, 0, True)
    assert np.allclose(a[1], b[1]) and np.allclose(a[2], b[2])


def test_empty_batch(rng):
    P, Q, X, Z = batch(rng, n=0)
    total, dP, dQ = get_backend(BACKEND).batch_loss_grad(
        P, Q, X, Z, np.zeros(0), np.zeros(0), 0, True
    )
    assert total == 0.0 and not dP.any() and not dQ.any()


def test_backend_selection():
    assert BACKEND in ("python", "cython")
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_env_var_forces_python_backend():
    env = dict(os.environ, TWOSIDED_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import twosided.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def small_batch(rng):
    P, Q, X, Z = batch(rng)
    return 0.3 * P, 0.3 * Q, X, Z


def run_epoch(kern, P, Q, X, Z, y, w, **kw):
    P, Q = P.copy(), Q.copy()
    vP, vQ = np.zeros_like(P), np.zeros_like(Q)
    args = dict(batch_size=7, lr=0.01, momentum=0.9, loss_code=0, use_relu=True,
                p_fixed=False, mask=None, reg_p=0, lam_p=0.0, reg_q=0, lam_q=0.0)
    args.update(kw)
    for _ in range(3):
        kern.sgd_epoch(P, Q, vP, vQ, X, Z, y, w, *args.values())
    return P, Q


@pytest.mark.parametrize("reg", [0, 1, 2, 3])
@pytest.mark.parametrize("code", [0, 1])
def test_sgd_epoch_matches_stepwise(rng, reg, code):
    # the numpy epoch must equal explicit per-minibatch updates
    from twosided.optim import RegSpec, reg_subgrad

    P, Q, X, Z = small_batch(rng)
    y = np.sign(rng.normal(size=len(X))) if code else rng.normal(size=len(X))
    w = rng.uniform(0.5, 2.0, size=len(X))
    kind = ["none", "frobenius", "l1", "l21"][reg]
    got = run_epoch(_pykernels, P, Q, X, Z, y, w, loss_code=code, reg_p=reg, lam_p=0.01,
                    reg_q=reg, lam_q=0.02)
    P, Q = P.copy(), Q.copy()
    vP, vQ = np.zeros_like(P), np.zeros_like(Q)
    for _ in range(3):
        for s in range(0, len(y), 7):
            sl = slice(s, s + 7)
            _, gP, gQ = _pykernels.batch_loss_grad(P, Q, X[sl], Z[sl], y[sl], w[sl], code, True)
            m = len(y[sl])
            gP = gP / m + 0.01 * reg_subgrad(RegSpec(kind, 0.01), P)
            gQ = gQ / m + 0.02 * reg_subgrad(RegSpec(kind, 0.02), Q.T).T
            vP = 0.9 * vP - 0.01 * gP
            vQ = 0.9 * vQ - 0.01 * gQ
            P, Q = P + vP, Q + vQ
    assert np.all(np.isfinite(P)) and np.all(np.isfinite(Q))
    assert np.allclose(got[0], P, atol=1e-12)
    assert np.allclose(got[1], Q, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("reg", [0, 1, 2, 3])
@pytest.mark.parametrize("code,relu", [(0, True), (0, False), (1, True)])
def test_sgd_epoch_backends_agree(rng, reg, code, relu):
    P, Q, X, Z = small_batch(rng)
    y = np.sign(rng.normal(size=len(X))) if code else rng.normal(size=len(X))
    w = rng.uniform(0.5, 2.0, size=len(X))
    mask = (rng.random(Q.shape) < 0.6).astype(np.float64)
    for kw in ({}, {"mask": mask}, {"p_fixed": True}):
        a = run_epoch(_pykernels, P, Q, X, Z, y, w, loss_code=code, use_relu=relu,
                      reg_p=reg, lam_p=0.01, reg_q=reg, lam_q=0.02, **kw)
        b = run_epoch(_ckernels, P, Q, X, Z, y, w, loss_code=code, use_relu=relu,
                      reg_p=reg, lam_p=0.01, reg_q=reg, lam_q=0.02, **kw)
        assert np.allclose(a[0], b[0], rtol=1e-9, atol=1e-11)
        assert np.allclose(a[1], b[1], rtol=1e-9, atol=1e-11)
        if kw.get("p_fixed"):
            assert np.array_equal(b[0], P)
        if "mask" in kw:
            assert np.array_equal(b[1][mask == 0], Q[mask == 0])
