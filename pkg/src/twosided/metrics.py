"""Evaluation metrics."""
import numpy as np

from .errors import EmptyEvaluationError, ShapeError


def _pair(preds, labels):
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.shape[0]} predictions for {labels.shape[0]} labels")
    if preds.size == 0:
        raise EmptyEvaluationError("cannot evaluate an empty set of predictions")
    return preds, labels


def metric_rmse(preds, labels):
    preds, labels = _pair(preds, labels)
    return float(np.sqrt(np.mean((preds - labels) ** 2)))


def metric_error_rate(preds, labels):
    """Fraction of instances whose predicted sign differs from the +-1 label."""
    preds, labels = _pair(preds, labels)
    return float(np.mean(np.where(preds >= 0.0, 1.0, -1.0) != np.sign(labels)))


def metric_multiclass_acc(preds, labels):
    preds, labels = _pair(preds, labels)
    return float(np.mean(preds == labels))


def argmax_lowest(scores):
    """Row-wise argmax; ties go to the lowest column index."""
    return np.argmax(np.asarray(scores), axis=1)
