"""The two-sided network: ``yhat = (x P) . act(z Q)``.

``P`` (D x K) maps features to a K-dimensional representation, ``Q`` (B x K)
maps a semantic descriptor to a K-dimensional model vector. Their inner
product is the prediction. ``P`` can be frozen and ``Q`` can be restricted to
a sparsity pattern, which is how the classic multi-task models are expressed.
"""
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import relu, relu_grad
from .errors import InvalidDimensionError, ShapeError, TwoSidedError

ACTIVATIONS = ("relu", "linear")


def _act(a, activation):
    return relu(a) if activation == "relu" else np.asarray(a, dtype=np.float64)


def _act_grad(a, activation):
    return relu_grad(a) if activation == "relu" else np.ones_like(a, dtype=np.float64)


@dataclass(eq=False)
class TwoSidedModel:
    P: np.ndarray
    Q: np.ndarray
    activation: str = "relu"
    p_fixed: bool = False
    q_mask: np.ndarray | None = None
    # (epoch, objective) records filled in by the trainer
    curve: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.P = np.array(self.P, dtype=np.float64, ndmin=2)
        self.Q = np.array(self.Q, dtype=np.float64, ndmin=2)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.P.shape[1] != self.Q.shape[1]:
            raise ShapeError(
                f"P is {self.P.shape[0]}x{self.P.shape[1]} but Q is "
                f"{self.Q.shape[0]}x{self.Q.shape[1]}; hidden widths differ"
            )
        if self.P.shape[1] < 1:
            raise InvalidDimensionError("hidden width K must be >= 1")
        if self.q_mask is not None:
            mask = np.array(self.q_mask, dtype=np.float64, ndmin=2)
            if mask.shape != self.Q.shape:
                raise ShapeError(f"q_mask is {mask.shape} but Q is {self.Q.shape}")
            if not np.all((mask == 0.0) | (mask == 1.0)):
                raise ValueError("q_mask must be binary")
            self.q_mask = mask
            self.Q *= mask
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.Q))):
            raise ValueError("model parameters must be finite")

    def __eq__(self, other):
        if not isinstance(other, TwoSidedModel):
            return NotImplemented
        masks = (self.q_mask is None and other.q_mask is None) or (
            self.q_mask is not None and other.q_mask is not None
            and np.array_equal(self.q_mask, other.q_mask)
        )
        return (
            self.activation == other.activation and self.p_fixed == other.p_fixed and masks
            and np.array_equal(self.P, other.P) and np.array_equal(self.Q, other.Q)
        )

    @property
    def D(self):
        return self.P.shape[0]

    @property
    def B(self):
        return self.Q.shape[0]

    @property
    def K(self):
        return self.P.shape[1]

    def copy(self):
        return TwoSidedModel(
            self.P.copy(),
            self.Q.copy(),
            self.activation,
            self.p_fixed,
            None if self.q_mask is None else self.q_mask.copy(),
        )

    def predict(self, X, Z):
        """Batched forward pass over the rows of ``X`` and ``Z``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        if X.shape[1] != self.D or Z.shape[1] != self.B or X.shape[0] != Z.shape[0]:
            raise ShapeError(
                f"features {X.shape} / descriptors {Z.shape} do not fit a model "
                f"with D={self.D}, B={self.B}"
            )
        return kernels.predict(self.P, self.Q, X, Z, self.activation == "relu")


@dataclass
class GradientPair:
    dP: np.ndarray
    dQ: np.ndarray


@dataclass
class Structure:
    """Structural constraints used when initialising a model.

    ``P`` is an optional fixed (or starting) left matrix; with ``p_fixed`` it
    is never updated. ``q_mask`` zeroes entries of ``Q`` permanently.
    """

    activation: str = "relu"
    p_fixed: bool = False
    P: np.ndarray | None = field(default=None, repr=False)
    q_mask: np.ndarray | None = field(default=None, repr=False)


def _vectors(m, x, z):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if x.shape[0] != m.D:
        raise ShapeError(f"feature vector has length {x.shape[0]}, model expects D={m.D}")
    if z.shape[0] != m.B:
        raise ShapeError(f"descriptor has length {z.shape[0]}, model expects B={m.B}")
    return x, z


def forward(m, x, z):
    x, z = _vectors(m, x, z)
    return float(np.dot(x @ m.P, _act(z @ m.Q, m.activation)))


def backward(m, x, z, upstream):
    """Gradients of ``upstream * yhat`` with respect to P and Q.

    ``upstream`` is dLoss/dyhat. Frozen P gives a zero dP; dQ is masked.
    """
    x, z = _vectors(m, x, z)
    h = x @ m.P
    a = z @ m.Q
    g = _act(a, m.activation)
    s = float(upstream)
    if m.p_fixed:
        dP = np.zeros_like(m.P)
    else:
        dP = s * np.outer(x, g)
    dQ = s * np.outer(z, h * _act_grad(a, m.activation))
    if m.q_mask is not None:
        dQ *= m.q_mask
    return GradientPair(dP, dQ)


def effective_weights(m, z):
    """The linear model ``w = P act(zQ)^T`` built for descriptor ``z``.

    ``forward(m, x, z) == x @ effective_weights(m, z)`` for every ``x``.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != m.B:
        raise ShapeError(f"descriptor has length {z.shape[0]}, model expects B={m.B}")
    return m.P @ _act(z @ m.Q, m.activation)


def effective_weight_matrix(m, Z):
    """Rows are effective weights for the rows of ``Z`` (shape M x D)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != m.B:
        raise ShapeError(f"descriptors have length {Z.shape[1]}, model expects B={m.B}")
    return _act(Z @ m.Q, m.activation) @ m.P.T


def hidden_width(D):
    """Default hidden width ``ceil(D / ln D)``."""
    if D < 2:
        raise InvalidDimensionError(f"hidden_width needs D >= 2, got {D}")
    return max(1, math.ceil(D / math.log(D)))


def init_model(D, B, K, seed, structure=None):
    """Random model with entries uniform in +-1/sqrt(fan-in)."""
    structure = structure or Structure()
    if K < 1:
        raise InvalidDimensionError(f"hidden width K must be >= 1, got {K}")
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1.0 / math.sqrt(D), 1.0 / math.sqrt(D), size=(D, K))
    Q = rng.uniform(-1.0 / math.sqrt(B), 1.0 / math.sqrt(B), size=(B, K))
    if structure.P is not None:
        given = np.array(structure.P, dtype=np.float64, ndmin=2)
        if given.shape != (D, K):
            raise ShapeError(f"structure P is {given.shape}, expected {(D, K)}")
        P = given.copy()
    elif structure.p_fixed:
        raise ShapeError("p_fixed requires an explicit P in the structure")
    mask = structure.q_mask
    if mask is not None and np.shape(mask) != (B, K):
        raise ShapeError(f"q_mask is {np.shape(mask)}, expected {(B, K)}")
    return TwoSidedModel(P, Q, structure.activation, structure.p_fixed, mask)


# Checkpoint: magic, then D, B, K, activation, p_fixed, has_mask, P, Q, mask.
_MAGIC = b"TSNM\x01"
_HEADER = struct.Struct("<QQQBBB")


class CheckpointError(TwoSidedError, ValueError):
    pass


def save_model(m, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            _HEADER.pack(
                m.D, m.B, m.K, ACTIVATIONS.index(m.activation), int(m.p_fixed),
                int(m.q_mask is not None),
            )
        )
        fh.write(np.ascontiguousarray(m.P, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(m.Q, dtype="<f8").tobytes())
        if m.q_mask is not None:
            fh.write(np.ascontiguousarray(m.q_mask, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise CheckpointError(f"{path}: not a two-sided model checkpoint")
    off = len(_MAGIC)
    try:
        D, B, K, act, p_fixed, has_mask = _HEADER.unpack_from(blob, off)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    off += _HEADER.size
    need = 8 * (D * K + B * K * (2 if has_mask else 1))
    if len(blob) - off != need:
        raise CheckpointError(f"{path}: expected {need} payload bytes, found {len(blob) - off}")
    P = np.frombuffer(blob, "<f8", D * K, off).reshape(D, K)
    off += 8 * D * K
    Q = np.frombuffer(blob, "<f8", B * K, off).reshape(B, K)
    off += 8 * B * K
    mask = np.frombuffer(blob, "<f8", B * K, off).reshape(B, K) if has_mask else None
    return TwoSidedModel(P.copy(), Q.copy(), ACTIVATIONS[act], bool(p_fixed), mask)
