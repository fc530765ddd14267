"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Times one SGD epoch (batch size 32) two ways: as a Python loop over
``batch_loss_grad`` calls, and as a single ``sgd_epoch`` call, which is what
training uses. Also times a full-dataset ``predict`` and checks that both
backends agree.
"""
import argparse
import time

import numpy as np

from twosided import _pykernels

try:
    from twosided import _ckernels
except ImportError:
    _ckernels = None

SHAPES = [
    # n, D, B, K, descriptor density
    (2048, 23, 142, 8, "sparse"),
    (2048, 43, 11, 12, "sparse"),
    (2048, 64, 32, 16, "dense"),
]


def make(n, D, B, K, density, rng):
    X = rng.normal(size=(n, D))
    if density == "sparse":
        Z = np.zeros((n, B))
        Z[np.arange(n), rng.integers(0, B, n)] = 1.0
        Z[np.arange(n), rng.integers(0, B, n)] = 1.0
    else:
        Z = rng.normal(size=(n, B))
    return 0.1 * rng.normal(size=(D, K)), 0.1 * rng.normal(size=(B, K)), X, Z, rng.normal(size=n), np.ones(n)


def epoch(kern, P, Q, X, Z, y, w, bs=32):
    for s in range(0, len(y), bs):
        kern.batch_loss_grad(P, Q, X[s:s + bs], Z[s:s + bs], y[s:s + bs], w[s:s + bs], 0, True)


def full_epoch(kern, P, Q, X, Z, y, w, bs=32):
    P, Q = P.copy(), Q.copy()
    vP, vQ = np.zeros_like(P), np.zeros_like(Q)
    kern.sgd_epoch(P, Q, vP, vQ, X, Z, y, w, bs, 1e-4, 0.9, 0, True, False, None, 1, 1e-3, 3, 1e-3)
    return P, Q


def time_fit(kern, repeat):
    """Seconds for a 20-epoch ``fit`` on a distributed-code problem."""
    from twosided import kernels
    from twosided.data import EncodedData
    from twosided.optim import TrainConfig, fit

    rng = np.random.default_rng(1)
    n, D, B = 4000, 20, 12
    X = rng.normal(size=(n, D))
    Z = np.zeros((n, B))
    Z[np.arange(n), rng.integers(0, 6, n)] = 1.0
    Z[np.arange(n), rng.integers(6, 12, n)] = 1.0
    groups = Z[:, :6].argmax(1) * 6 + Z[:, 6:].argmax(1)
    data = EncodedData(X, Z, rng.normal(size=n), groups)
    cfg = TrainConfig(epochs=20, batch_size=32, learning_rate=0.01, seed=0)
    saved = kernels.sgd_epoch
    kernels.sgd_epoch = kern.sgd_epoch
    try:
        return best_of(lambda: fit(data, cfg), repeat)
    finally:
        kernels.sgd_epoch = saved


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    if _ckernels is None:
        print("compiled kernels not built; timing the numpy backend only")
    print(f"{'shape (n,D,B,K)':<24}{'Z':<8}{'backend':<9}{'grad loop ms':>13}{'sgd_epoch ms':>13}"
          f"{'predict ms':>12}{'speedup':>9}")
    for n, D, B, K, density in SHAPES:
        P, Q, X, Z, y, w = make(n, D, B, K, density, rng)
        base = None
        for name, kern in backends:
            t_loop = best_of(lambda: epoch(kern, P, Q, X, Z, y, w), args.repeat)
            t_epoch = best_of(lambda: full_epoch(kern, P, Q, X, Z, y, w), args.repeat)
            t_pred = best_of(lambda: kern.predict(P, Q, X, Z, True), args.repeat)
            base = base or t_epoch
            print(f"{str((n, D, B, K)):<24}{density:<8}{name:<9}{1e3 * t_loop:>13.2f}"
                  f"{1e3 * t_epoch:>13.2f}{1e3 * t_pred:>12.3f}{base / t_epoch:>8.1f}x")
        if _ckernels is not None:
            a = _pykernels.batch_loss_grad(P, Q, X, Z, y, w, 0, True)
            b = _ckernels.batch_loss_grad(P, Q, X, Z, y, w, 0, True)
            diff = max(float(np.max(np.abs(u - v))) for u, v in zip(a[1:], b[1:]))
            pa = full_epoch(_pykernels, P, Q, X, Z, y, w)
            pb = full_epoch(_ckernels, P, Q, X, Z, y, w)
            pdiff = max(float(np.max(np.abs(u - v))) for u, v in zip(pa, pb))
            print(f"{'':<24}max |grad difference| = {diff:.2e}, "
                  f"max |parameter difference after sgd_epoch| = {pdiff:.2e}")

    print()
    t_py = time_fit(_pykernels, max(1, args.repeat // 2))
    print(f"fit, 4000 rows x 20 epochs: python {t_py:.3f} s", end="")
    if _ckernels is not None:
        t_c = time_fit(_ckernels, max(1, args.repeat // 2))
        print(f", cython {t_c:.3f} s ({t_py / t_c:.1f}x)")
    else:
        print()


if __name__ == "__main__":
    main()
