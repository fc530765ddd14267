import numpy as np
import pytest

from twosided.metrics import metric_rmse
from twosided.synth import SyntheticSpec, synth_generate


@pytest.mark.parametrize("world", ["bilinear_planted", "additive_effects"])
def test_noise_free_oracle_is_exact(world):
    ds, _, oracle = synth_generate(SyntheticSpec(world, noise=0.0, per_domain=20))
    assert metric_rmse(oracle.predict(ds.X, ds.levels), ds.y) == 0.0


def test_oracle_rmse_matches_noise():
    spec = SyntheticSpec("bilinear_planted", cardinalities=(10, 10), noise=0.3, per_domain=100)
    ds, _, oracle = synth_generate(spec)
    assert len(ds) == 10_000
    assert abs(metric_rmse(oracle.predict(ds.X, ds.levels), ds.y) - 0.3) < 0.03


def test_determinism():
    a = synth_generate(SyntheticSpec(seed=3))[0]
    b = synth_generate(SyntheticSpec(seed=3))[0]
    c = synth_generate(SyntheticSpec(seed=4))[0]
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_bilinear_oracle_structure():
    ds, schema, oracle = synth_generate(SyntheticSpec(activation="relu", K_true=2))
    P, Q = oracle.params["P"], oracle.params["Q"]
    z = schema.encode_many([[1, 2]])
    assert np.allclose(oracle.weights([1, 2]), np.maximum(z @ Q, 0) @ P.T)


def test_attribute_world():
    spec = SyntheticSpec("attribute_classes", D=12, cardinalities=(5,), n_attributes=6,
                         per_domain=10, noise=0.0)
    ds, schema, oracle = synth_generate(spec)
    A = oracle.params["attributes"]
    assert ds.kind == "multiclass" and len(ds) == 50
    assert len({a.tobytes() for a in A}) == 5 and set(np.unique(A)) <= {-1.0, 1.0}
    # noise-free instances sit at their class prototype G a_c
    G = oracle.params["G"]
    assert np.allclose(ds.X, A[ds.y.astype(int)] @ G.T)
    assert np.array_equal(np.argmax(oracle.predict(ds.X, None), axis=1), ds.y)


@pytest.mark.parametrize(
    "kwargs",
    [dict(world="cubic"), dict(noise=-1.0), dict(D=0), dict(cardinalities=(0, 2)),
     dict(cardinalities=()), dict(activation="tanh")],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticSpec(**kwargs)


def test_attribute_world_limits():
    with pytest.raises(ValueError):
        synth_generate(SyntheticSpec("attribute_classes", cardinalities=(9,), n_attributes=3, D=5))
    with pytest.raises(ValueError):
        synth_generate(SyntheticSpec("attribute_classes", cardinalities=(4,), n_attributes=8, D=5))
