"""Dense matrix helpers, activations, losses and matrix norms.

A "matrix" throughout the package is a 2-D ``float64`` numpy array. The
functions here are pure and never mutate their inputs.
"""
from enum import Enum

import numpy as np

from .errors import InvalidLabelError, ShapeError


class LossKind(str, Enum):
    SQUARED = "squared"
    HINGE = "hinge"


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got an array with {m.ndim} dims")
    return m


def matmul(a, b):
    """Matrix product ``a @ b`` with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def relu(v):
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def relu_grad(v):
    # derivative at exactly 0 is taken as 0
    return (np.asarray(v) > 0.0).astype(np.float64)


def _check_hinge_labels(y):
    y = np.asarray(y, dtype=np.float64)
    bad = (y != 1.0) & (y != -1.0)
    if np.any(bad):
        raise InvalidLabelError(
            f"hinge loss needs labels in {{-1, +1}}, got {np.asarray(y)[bad].flat[0]!r}"
        )
    return y


def loss(kind, yhat, y):
    """Per-instance loss. Works elementwise on arrays as well as on scalars."""
    kind = LossKind(kind)
    yhat = np.asarray(yhat, dtype=np.float64)
    if kind is LossKind.SQUARED:
        out = (yhat - np.asarray(y, dtype=np.float64)) ** 2
    else:
        y = _check_hinge_labels(y)
        out = np.maximum(0.0, 1.0 - y * yhat)
    return float(out) if out.ndim == 0 else out


def loss_grad(kind, yhat, y):
    """Derivative of :func:`loss` with respect to ``yhat``.

    The hinge subgradient at the kink ``y * yhat == 1`` is 0.
    """
    kind = LossKind(kind)
    yhat = np.asarray(yhat, dtype=np.float64)
    if kind is LossKind.SQUARED:
        out = 2.0 * (yhat - np.asarray(y, dtype=np.float64))
    else:
        y = _check_hinge_labels(y)
        out = np.where(1.0 - y * yhat > 0.0, -y, 0.0)
    return float(out) if out.ndim == 0 else out


def norm_l21(w):
    """Sum over rows of each row's Euclidean norm."""
    w = as_matrix(w)
    return float(np.sqrt((w * w).sum(axis=1)).sum())


def norm_l1(w):
    return float(np.abs(as_matrix(w)).sum())


def norm_fro(w):
    w = as_matrix(w)
    return float(np.sqrt((w * w).sum()))
