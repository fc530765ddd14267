"""Synthetic worlds with planted parameters, used as test oracles."""
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .descriptor import DISTRIBUTED, DescriptorSchema

WORLDS = ("bilinear_planted", "additive_effects", "attribute_classes")


@dataclass
class SyntheticSpec:
    """Parameters of a synthetic world.

    For ``attribute_classes`` the first cardinality is the number of classes
    and ``n_attributes`` the attribute vector length.
    """

    world: str = "bilinear_planted"
    D: int = 10
    cardinalities: tuple = (3, 3)
    K_true: int = 3
    noise: float = 0.1
    per_domain: int = 100
    seed: int = 0
    activation: str = "relu"
    shared_bias: bool = False
    n_attributes: int = 10

    def __post_init__(self):
        self.cardinalities = tuple(int(c) for c in self.cardinalities)
        if self.world not in WORLDS:
            raise ValueError(f"world must be one of {WORLDS}, got {self.world!r}")
        counts = [self.D, self.K_true, self.per_domain, self.n_attributes, *self.cardinalities]
        if not self.cardinalities or min(counts) < 1:
            raise ValueError("all counts in a synthetic spec must be >= 1")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"activation must be relu or linear, got {self.activation!r}")


@dataclass
class Oracle:
    """Planted parameters; ``weights(levels)`` is the true linear model of a domain."""

    world: str
    params: dict = field(repr=False)
    schema: DescriptorSchema = None

    def weights(self, levels):
        p = self.params
        if self.world == "attribute_classes":
            # one row per class; levels are not needed
            return p["attributes"] @ p["G"].T
        levels = np.atleast_2d(np.asarray(levels, dtype=np.int64))
        if self.world == "bilinear_planted":
            A = self.schema.encode_many(levels) @ p["Q"]
            G = np.maximum(A, 0.0) if p["activation"] == "relu" else A
            return G @ p["P"].T
        W = np.repeat(p["w0"][None, :], levels.shape[0], axis=0)
        for f, effects in enumerate(p["effects"]):
            W += effects[levels[:, f]]
        return W

    def predict(self, X, levels):
        """Noise-free labels (regression worlds) or class scores (attribute world)."""
        X = np.asarray(X, dtype=np.float64)
        if self.world == "attribute_classes":
            return X @ self.weights(None).T
        return np.einsum("nd,nd->n", X, self.weights(levels))


def _grid_levels(cards, per_domain):
    combos = np.array(np.meshgrid(*[np.arange(c) for c in cards], indexing="ij"))
    combos = combos.reshape(len(cards), -1).T
    return np.repeat(combos, per_domain, axis=0)


def synth_generate(spec):
    """Draw a dataset from ``spec``; returns ``(dataset, schema, oracle)``."""
    rng = np.random.default_rng(spec.seed)
    cards = spec.cardinalities
    D = spec.D
    if spec.world == "attribute_classes":
        return _attribute_world(spec, rng)
    schema = DescriptorSchema(
        tuple((f"f{i}", c) for i, c in enumerate(cards)), DISTRIBUTED, spec.shared_bias
    )
    levels = _grid_levels(cards, spec.per_domain)
    n = levels.shape[0]
    if spec.world == "bilinear_planted":
        K = spec.K_true
        F = len(cards) + int(spec.shared_bias)
        P = rng.normal(scale=np.sqrt(2.0 / (D * K)), size=(D, K))
        Q = rng.normal(scale=np.sqrt(1.0 / F), size=(schema.length, K))
        params = {"P": P, "Q": Q, "activation": spec.activation}
    else:
        params = {
            "w0": rng.normal(scale=1.0 / np.sqrt(D), size=D),
            "effects": [rng.normal(scale=1.0 / np.sqrt(D), size=(c, D)) for c in cards],
        }
    oracle = Oracle(spec.world, params, schema)
    X = rng.normal(size=(n, D))
    y = oracle.predict(X, levels) + spec.noise * rng.normal(size=n)
    ds = Dataset(X, y, levels, "regression", factor_names=schema.names)
    return ds, schema, oracle


def _attribute_world(spec, rng):
    C = spec.cardinalities[0]
    A = spec.n_attributes
    if C > 2**A:
        raise ValueError(f"cannot draw {C} distinct binary attribute vectors of length {A}")
    attrs = []
    seen = set()
    while len(attrs) < C:
        a = rng.choice([-1.0, 1.0], size=A)
        if a.tobytes() not in seen:
            seen.add(a.tobytes())
            attrs.append(a)
    attrs = np.array(attrs)
    if spec.D < A:
        raise ValueError(f"attribute_classes needs D >= n_attributes, got D={spec.D}, A={A}")
    # orthonormal columns: every prototype G a_c has the same norm
    G, _ = np.linalg.qr(rng.normal(size=(spec.D, A)))
    labels = np.repeat(np.arange(C), spec.per_domain)
    X = attrs[labels] @ G.T + spec.noise * rng.normal(size=(labels.size, spec.D))
    schema = DescriptorSchema((("class", C),), DISTRIBUTED)
    oracle = Oracle("attribute_classes", {"G": G, "attributes": attrs}, schema)
    ds = Dataset(X, labels, labels, "multiclass", factor_names=["class"])
    return ds, schema, oracle
