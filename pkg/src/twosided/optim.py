"""Mini-batch SGD on the domain-averaged empirical risk.

The objective is

    (1/M) sum_i (1/N_i) sum_j L(yhat_ij, y_ij) + lam_P * R_P(P) + lam_Q * R_Q(Q')

with ``Q' = Q^T`` (columns are per-domain model vectors), or the plain
instance mean when ``domain_weighting == "per_instance_mean"``. Nonsmooth
norms are handled with subgradient steps.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import LossKind, _check_hinge_labels, norm_fro, norm_l1, norm_l21
from .data import EncodedData
from .errors import DivergenceError
from .model import Structure, hidden_width, init_model

log = logging.getLogger(__name__)

REG_KINDS = ("none", "frobenius", "l1", "l21")
WEIGHTINGS = ("per_domain_mean", "per_instance_mean")


@dataclass(frozen=True)
class RegSpec:
    kind: str = "none"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ValueError(f"regularizer kind must be one of {REG_KINDS}, got {self.kind!r}")
        if not self.strength >= 0.0:
            raise ValueError(f"regularizer strength must be >= 0, got {self.strength}")

    @property
    def active(self):
        return self.kind != "none" and self.strength > 0.0


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    loss: str = "squared"
    K: int | str = "auto"
    reg_p: RegSpec = field(default_factory=RegSpec)
    reg_q: RegSpec = field(default_factory=RegSpec)
    domain_weighting: str = "per_domain_mean"
    momentum: float = 0.0
    lr_decay: float = 0.5
    lr_decay_every: int = 80

    def __post_init__(self):
        self.loss = LossKind(self.loss).value
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.domain_weighting not in WEIGHTINGS:
            raise ValueError(f"domain_weighting must be one of {WEIGHTINGS}")
        if self.K != "auto" and int(self.K) < 1:
            raise ValueError(f"K must be >= 1 or 'auto', got {self.K}")
        if not 0.0 < self.lr_decay <= 1.0 or self.lr_decay_every < 1:
            raise ValueError("lr_decay must be in (0, 1] and lr_decay_every >= 1")

    def resolve_K(self, D):
        return hidden_width(D) if self.K == "auto" else int(self.K)

    def lr_at(self, epoch):
        """Learning rate used during ``epoch`` (1-based)."""
        return self.learning_rate * self.lr_decay ** ((epoch - 1) // self.lr_decay_every)


def reg_value(spec, w):
    if spec.kind == "none" or spec.strength == 0.0:
        return 0.0
    norm = {"frobenius": norm_fro, "l1": norm_l1, "l21": norm_l21}[spec.kind]
    return spec.strength * norm(w)


def reg_subgrad(spec, w):
    """Subgradient of the (unscaled) norm named by ``spec.kind`` at ``w``.

    Zero is used wherever the norm is not differentiable.
    """
    w = np.asarray(w, dtype=np.float64)
    if spec.kind == "none":
        return np.zeros_like(w)
    if spec.kind == "frobenius":
        n = np.sqrt((w * w).sum())
        return w / n if n > 0 else np.zeros_like(w)
    if spec.kind == "l1":
        return np.sign(w)
    rows = np.sqrt((w * w).sum(axis=1, keepdims=True))
    return np.divide(w, rows, out=np.zeros_like(w), where=rows > 0)


def instance_weights(data, weighting):
    """Weights ``w_i`` so that mean_i(w_i L_i) is the configured risk."""
    sizes = data.group_sizes()
    if weighting == "per_instance_mean":
        return np.ones(len(data))
    used = np.count_nonzero(sizes)
    return len(data) / (used * sizes[data.groups].astype(np.float64))


def _loss_code(loss):
    return 0 if LossKind(loss) is LossKind.SQUARED else 1


def regularization(model, config):
    return reg_value(config.reg_p, model.P) + reg_value(config.reg_q, model.Q.T)


def objective(model, data, config):
    """Risk plus regularizers of ``model`` on ``data`` (an :class:`EncodedData`)."""
    w = instance_weights(data, config.domain_weighting)
    if config.loss == "hinge":
        _check_hinge_labels(data.y)
    total = kernels.batch_loss(
        model.P, model.Q, data.X, data.Z, data.y, w,
        _loss_code(config.loss), model.activation == "relu",
    )
    return total / len(data) + regularization(model, config)


def fit(data, config, structure=None, model=None):
    """Train a two-sided model on encoded data; returns the trained model.

    The model's ``curve`` holds one ``(epoch, objective)`` record per epoch.
    """
    structure = structure or Structure()
    if config.loss == "hinge":
        _check_hinge_labels(data.y)
    n, D = data.X.shape
    B = data.Z.shape[1]
    if model is None:
        if structure.P is not None:
            K = np.shape(structure.P)[1]
        elif structure.q_mask is not None:
            K = np.shape(structure.q_mask)[1]
        else:
            K = config.resolve_K(D)
        model = init_model(D, B, K, config.seed, structure)
    else:
        model = model.copy()
    weights = instance_weights(data, config.domain_weighting)
    code = _loss_code(config.loss)
    use_relu = model.activation == "relu"
    # shuffling stream is independent of the initialisation stream
    rng = np.random.default_rng([config.seed, 1])
    P, Q, mask = model.P, model.Q, model.q_mask
    vP = np.zeros_like(P)
    vQ = np.zeros_like(Q)
    mu = config.momentum
    bs = config.batch_size
    reg_p = kernels.REG_CODES[config.reg_p.kind] if config.reg_p.active else 0
    reg_q = kernels.REG_CODES[config.reg_q.kind] if config.reg_q.active else 0
    curve = []
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        X, Z, y, w = data.X[order], data.Z[order], data.y[order], weights[order]
        kernels.sgd_epoch(
            P, Q, vP, vQ, X, Z, y, w, bs, lr, mu, code, use_relu, model.p_fixed, mask,
            reg_p, config.reg_p.strength, reg_q, config.reg_q.strength,
        )
        obj = objective(model, data, config)
        if not np.isfinite(obj):
            raise DivergenceError(epoch, obj)
        curve.append((epoch, obj))
        log.debug("epoch %d lr %.3g objective %.6g", epoch, lr, obj)
    model.curve = curve
    return model


def train(dataset, schema, config, structure=None):
    """Encode ``dataset`` under ``schema`` and fit a model to it."""
    data = dataset if isinstance(dataset, EncodedData) else dataset.encode(schema)
    return fit(data, config, structure)
