"""Backend selection for the batched forward/backward kernels.

The compiled ``_ckernels`` module is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is used. Setting the environment
variable ``TWOSIDED_PURE_PYTHON=1`` forces the numpy backend.
"""
import os

from . import _pykernels

if os.environ.get("TWOSIDED_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

# Whole-dataset passes are single BLAS calls in numpy, which beats the compiled
# per-row loops (see benchmarks/bench_kernels.py). The compiled code pays off in
# the minibatch loop, where it removes per-step interpreter overhead.
predict = _pykernels.predict
batch_loss = _pykernels.batch_loss
batch_loss_grad = _impl.batch_loss_grad
sgd_epoch = _impl.sgd_epoch
REG_CODES = _pykernels.REG_CODES


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
