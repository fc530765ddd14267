"""Acceptance criteria, one test per criterion.

Each test records a ``CRITERION n PASS|FAIL|SKIP`` line that is printed in
the terminal summary. Running this file directly prints the same lines.
"""
import os
import time

import numpy as np
import pytest

from twosided import baselines as bl
from twosided.core import loss, loss_grad
from twosided.data import Dataset, EncodedData
from twosided.descriptor import ONE_HOT_ATOMIC, DescriptorSchema
from twosided.ingest import load_restaurant, load_school, standardize_features
from twosided.kernels import get_backend
from twosided.metrics import metric_rmse
from twosided.model import (
    Structure,
    TwoSidedModel,
    backward,
    effective_weight_matrix,
    forward,
)
from twosided.optim import RegSpec, TrainConfig, fit
from twosided.protocols import (
    make_split,
    run_mdl,
    run_mdmt,
    run_mtl_multiclass,
    run_zsda,
    run_zsl,
)
from twosided.synth import SyntheticSpec, synth_generate

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []


def record(n, status, detail, elapsed):
    line = f"CRITERION {n} {status}: {detail} [{elapsed:.2f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)


def check(n, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    record(n, "PASS" if ok else "FAIL", f"{detail}; runtime limit {limit}s", elapsed)
    assert ok, detail


# -- 1: gradient correctness ------------------------------------------------


def _case_loss(P, Q, x, z, y, kind, activation):
    m = TwoSidedModel(P, Q, activation)
    return loss(kind, forward(m, x, z), y)


def _regime(P, Q, x, z, y, kind, activation):
    """Activation pattern and hinge activeness; constant between kinks."""
    a = z @ Q
    pat = tuple(a > 0) if activation == "relu" else ()
    if kind == "hinge":
        yhat = float((x @ P) @ (np.maximum(a, 0) if activation == "relu" else a))
        pat += (y * yhat < 1.0,)
    return pat


def _near_kink(P, Q, x, z, y, kind, activation, eps=1e-6):
    a = z @ Q
    if activation == "relu" and np.any(np.abs(a) < eps):
        return True
    if kind == "hinge":
        m = TwoSidedModel(P, Q, activation)
        return abs(1.0 - y * forward(m, x, z)) < eps
    return False


def test_criterion_1_gradients():
    rng = np.random.default_rng(1)
    h = 1e-6
    t0 = time.perf_counter()
    checked = excluded = worst = 0
    failures = []
    for case in range(1000):
        D, B, K = rng.integers(1, 7), rng.integers(1, 6), rng.integers(1, 5)
        P, Q = rng.normal(size=(D, K)), rng.normal(size=(B, K))
        x, z = rng.normal(size=D), rng.normal(size=B)
        kind = ("squared", "hinge")[case % 2]
        activation = ("relu", "linear")[(case // 2) % 2]
        y = float(rng.choice([-1.0, 1.0])) if kind == "hinge" else float(rng.normal())
        args = (x, z, y, kind, activation)
        if _near_kink(P, Q, *args):
            excluded += 1
            continue
        m = TwoSidedModel(P, Q, activation)
        yhat = forward(m, x, z)
        g = backward(m, x, z, loss_grad(kind, yhat, y))
        base = _regime(P, Q, *args)
        crossed = False
        num = {"P": np.zeros_like(P), "Q": np.zeros_like(Q)}
        for name, M in (("P", P), ("Q", Q)):
            for idx in np.ndindex(M.shape):
                vals = []
                for sgn in (1.0, -1.0):
                    Mp = M.copy()
                    Mp[idx] += sgn * h
                    pair = (Mp, Q) if name == "P" else (P, Mp)
                    if _regime(*pair, *args) != base:
                        crossed = True
                    vals.append(_case_loss(*pair, *args))
                num[name][idx] = (vals[0] - vals[1]) / (2 * h)
        if crossed:
            excluded += 1
            continue
        checked += 1
        for ana, fd in ((g.dP, num["P"]), (g.dQ, num["Q"])):
            err = np.abs(ana - fd)
            rel = err / np.maximum(np.maximum(np.abs(ana), np.abs(fd)), 1e-300)
            bad = (err > 1e-7) & (rel > 1e-4)
            worst = max(worst, float(np.max(np.where(err > 1e-7, rel, 0.0))))
            if bad.any():
                failures.append(case)
        # the batch kernels must agree with the per-instance backward pass
        code = 0 if kind == "squared" else 1
        for backend in ("python", "cython"):
            try:
                kern = get_backend(backend)
            except ImportError:
                continue
            _, kP, kQ = kern.batch_loss_grad(
                P, Q, x[None, :], z[None, :], np.array([y]), np.ones(1), code,
                activation == "relu",
            )
            if not (np.allclose(kP, g.dP, atol=1e-12) and np.allclose(kQ, g.dQ, atol=1e-12)):
                failures.append(case)
    elapsed = time.perf_counter() - t0
    detail = (f"{checked} cases checked, {excluded} kink-adjacent excluded, "
              f"worst relative error {worst:.2e}, {len(failures)} failing")
    check(1, not failures and checked > 900, detail, elapsed, 10)


# -- 2: STL reduction -------------------------------------------------------


def test_criterion_2_stl_reduction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    M, D, n = 5, 5, 100
    W_true = rng.normal(size=(M, D))
    groups = np.repeat(np.arange(M), n)
    X = rng.normal(size=(M * n, D))
    y = np.einsum("nd,nd->n", X, W_true[groups]) + 0.1 * rng.normal(size=M * n)
    schema = DescriptorSchema((("domain", M),), ONE_HOT_ATOMIC)
    data = EncodedData(X, schema.encode_many(groups.reshape(-1, 1)), y, groups)
    structure = Structure("linear", p_fixed=True, P=np.eye(D))
    # full-batch gradient descent converges to the least-squares optimum
    cfg = TrainConfig(learning_rate=1.0, epochs=300, batch_size=M * n, momentum=0.5,
                      lr_decay=1.0, seed=0)
    model = fit(data, cfg, structure)
    W_model = effective_weight_matrix(model, schema.encode_many(np.arange(M).reshape(-1, 1)))
    W_ridge = bl.stl_fit(X, y, groups, "squared", 0.0)
    diffs = [
        metric_rmse(X[groups == g] @ W_model[g], X[groups == g] @ W_ridge[g]) for g in range(M)
    ]
    elapsed = time.perf_counter() - t0
    check(2, max(diffs) < 1e-3,
          f"max per-domain prediction RMSE difference {max(diffs):.2e} (< 1e-3)", elapsed, 30)


# -- 3: structural identities of classic models -----------------------------


def test_criterion_3_structural_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    M, D, n = 4, 6, 60
    groups = np.repeat(np.arange(M), n)
    X = rng.normal(size=(M * n, D))
    W = rng.normal(size=D) + 0.3 * rng.normal(size=(M, D))
    y = np.einsum("nd,nd->n", X, W[groups]) + 0.1 * rng.normal(size=M * n)
    cfg = TrainConfig(learning_rate=0.02, epochs=200, seed=0)
    idx = np.arange(M).reshape(-1, 1)

    rmtl = bl.make_baseline("RMTL", M, D)
    m = bl.fit_baseline(rmtl, X, y, groups, cfg)
    Wr = effective_weight_matrix(m, rmtl.schema.encode_many(idx))
    Qp = m.Q.T  # columns: one per domain, then the shared bias column
    rmtl_err = np.abs(Wr - (Qp[:, M][None, :] + Qp[:, :M].T)).max()

    feda = bl.make_baseline("FEDA", M, D)
    m = bl.fit_baseline(feda, X, y, groups, cfg)
    zero = feda.structure.q_mask == 0
    feda_leak = np.abs(m.Q[zero]).max()
    Wf = effective_weight_matrix(m, feda.schema.encode_many(idx))
    shared = m.Q[M, :D]
    own = np.stack([m.Q[i, (i + 1) * D:(i + 2) * D] for i in range(M)])
    feda_err = np.abs(Wf - (shared[None, :] + own)).max()

    go = bl.make_baseline("GOMTL", M, D)
    m = bl.fit_baseline(go, X, y, groups, cfg)
    Z = go.schema.encode_many(idx)
    go_err = np.abs(effective_weight_matrix(m, Z) - (m.P @ (Z @ m.Q).T).T).max()
    Zi = go.schema.encode_many(groups.reshape(-1, 1))
    pred_err = np.abs(m.predict(X, Zi) - np.einsum("nd,nd->n", X, (m.P @ (Zi @ m.Q).T).T)).max()
    elapsed = time.perf_counter() - t0
    ok = rmtl_err < 1e-12 and feda_leak == 0.0 and feda_err < 1e-12 and max(go_err, pred_err) < 1e-10
    check(3, ok,
          f"RMTL w_i=w_0+v_i err {rmtl_err:.1e}; FEDA masked entries max |Q| {feda_leak:.1e} "
          f"after 200 epochs, shared+own err {feda_err:.1e}; GO-MTL W=P(ZQ)^T err "
          f"{max(go_err, pred_err):.1e}", elapsed, 60)


# -- 4: planted zero-shot domain adaptation ---------------------------------


def test_criterion_4_planted_zsda():
    t0 = time.perf_counter()
    seed = 0
    spec = SyntheticSpec("bilinear_planted", D=10, cardinalities=(3, 3), K_true=3, noise=0.1,
                         per_domain=300, seed=seed, activation="linear")
    ds, schema, oracle = synth_generate(spec)
    cfg = TrainConfig(learning_rate=0.05, epochs=200, K=3, seed=seed, lr_decay_every=66)
    rep = run_zsda(ds, schema, cfg, Structure("linear"), baselines=("LR", "TC"))
    keys, groups = ds.domains()
    split = make_split(groups, 0.5, seed)
    oracle_rmse = []
    for d in range(len(keys)):
        te = split.test[groups[split.test] == d]
        oracle_rmse.append(metric_rmse(oracle.predict(ds.X[te], ds.levels[te]), ds.y[te]))
    orc = float(np.mean(oracle_rmse))
    ours = rep.aggregate
    lr = rep.comparisons["LR"]["aggregate"]
    elapsed = time.perf_counter() - t0
    ok = abs(ours - orc) <= 0.15 * orc and ours < lr
    check(4, ok,
          f"held-out RMSE {ours:.4f} vs oracle {orc:.4f} ({100 * (ours / orc - 1):+.1f}%, "
          f"tolerance 15%); blind-transfer STL {lr:.4f}; tensor completion "
          f"{rep.comparisons['TC']['aggregate']:.4f}", elapsed, 120)


# -- 5: tensor completion ---------------------------------------------------


def test_criterion_5_tensor_completion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    a, b, c = rng.normal(size=5), rng.normal(size=2), rng.normal(size=2)
    full = np.einsum("i,j,k->ijk", a, b, c)
    hidden = (1, 0)
    models = {(i, j): full[:, i, j] for i in range(2) for j in range(2) if (i, j) != hidden}
    t = bl.tensor_store(models, (2, 2))
    done = bl.tensor_complete(t, rank=1)
    err = np.abs(done.slice(hidden) - full[:, hidden[0], hidden[1]]).max()
    untouched = all(np.array_equal(done.slice(k), v) for k, v in models.items())
    elapsed = time.perf_counter() - t0
    check(5, err < 1e-6 and untouched,
          f"hidden slice max abs error {err:.2e} (< 1e-6); observed entries unchanged: "
          f"{untouched}", elapsed, 5)


# -- 6: synthetic zero-shot learning ----------------------------------------

ZSL_WORLDS = 10


def zsl_world(seed, activation="relu"):
    spec = SyntheticSpec("attribute_classes", D=20, cardinalities=(10,), noise=0.1,
                         per_domain=50, seed=seed, n_attributes=10)
    ds, _, oracle = synth_generate(spec)
    # bias entry on both sides so class scores can carry an offset
    Zc = np.hstack([oracle.params["attributes"], np.ones((10, 1))])
    X = np.hstack([ds.X, np.ones((len(ds), 1))])
    labels = ds.y.astype(np.int64)
    seen = labels < 8
    train = Dataset(X[seen], labels[seen], labels[seen], "multiclass")
    cfg = TrainConfig(learning_rate=0.05, epochs=50, K=20, seed=seed, loss="hinge",
                      reg_p=RegSpec("frobenius", 0.01), reg_q=RegSpec("frobenius", 0.01))
    rep = run_zsl(train, Zc[:8], X[~seen], labels[~seen] - 8, Zc[8:], cfg,
                  Structure(activation))
    return rep.notes["overall_accuracy"]


def test_criterion_6_synthetic_zsl():
    t0 = time.perf_counter()
    accs = [zsl_world(seed) for seed in range(ZSL_WORLDS)]
    mean = float(np.mean(accs))
    elapsed = time.perf_counter() - t0
    check(6, mean >= 0.8,
          f"novel-class accuracy {mean:.3f} averaged over {ZSL_WORLDS} seeded worlds "
          f"(>= 0.8, chance 0.5); per world {np.round(accs, 2).tolist()}", elapsed, 60)


# -- 7, 8: public datasets (only when supplied) -----------------------------


def _env_path(var):
    path = os.environ.get(var, "")
    return path if path and os.path.exists(path) else None


def test_criterion_7_school():
    path = _env_path("TWOSIDED_SCHOOL_CSV")
    if path is None:
        record(7, "SKIP", "set TWOSIDED_SCHOOL_CSV to the school CSV to run", 0.0)
        pytest.skip("school CSV not supplied")
    t0 = time.perf_counter()
    ds, schema = load_school(path, 50)
    _, groups = ds.domains()
    split = make_split(groups, 0.5, 0)
    ds.X, _, _ = standardize_features(ds.X, split.train)
    ds.X = np.hstack([ds.X, np.ones((len(ds), 1))])
    cfg = TrainConfig(seed=0)
    mdl = run_mdl(ds, schema, cfg, Structure("relu"), baselines=("LR",))
    zsda = run_zsda(ds, schema, cfg, Structure("relu"), baselines=("LR",))
    m_lr = mdl.comparisons["LR"]["aggregate"]
    z_lr = zsda.comparisons["LR"]["aggregate"]
    elapsed = time.perf_counter() - t0
    ok = (9.0 <= mdl.aggregate <= 9.8 and 9.8 <= zsda.aggregate <= 10.7
          and mdl.aggregate <= m_lr and zsda.aggregate <= z_lr)
    check(7, ok, f"MDL {mdl.aggregate:.3f} (LR {m_lr:.3f}), ZSDA {zsda.aggregate:.3f} "
                 f"(LR {z_lr:.3f})", elapsed, 600)


RESTAURANT_ORDER = ("ours", "GOMTL", "MTFL", "FEDA", "RMTL", "LR")


def test_criterion_8_restaurant():
    path = _env_path("TWOSIDED_RESTAURANT_CSV")
    if path is None:
        record(8, "SKIP", "set TWOSIDED_RESTAURANT_CSV to the restaurant CSV to run", 0.0)
        pytest.skip("restaurant CSV not supplied")
    t0 = time.perf_counter()
    ds, dom, task = load_restaurant(path)
    _, groups = ds.domains()
    split = make_split(groups, 0.5, 0)
    ds.X, _, _ = standardize_features(ds.X, split.train)
    ds.X = np.hstack([ds.X, np.ones((len(ds), 1))])
    cfg = TrainConfig(seed=0)
    rep = run_mdmt(ds, dom, task, cfg, Structure("relu"), baselines=RESTAURANT_ORDER[1:],
                   compare_atomic=False)
    scores = [rep.aggregate] + [rep.comparisons[n]["aggregate"] for n in RESTAURANT_ORDER[1:]]
    inversions = [
        (RESTAURANT_ORDER[i], RESTAURANT_ORDER[i + 1])
        for i in range(len(scores) - 1) if scores[i] > scores[i + 1] + 0.1
    ]
    elapsed = time.perf_counter() - t0
    ok = scores[0] <= 1.0 and scores[-1] >= 2.0 and not inversions
    detail = ", ".join(f"{n} {s:.3f}" for n, s in zip(RESTAURANT_ORDER, scores))
    check(8, ok, f"{detail}; inversions > 0.1: {inversions}", elapsed, 300)


# -- 9: substitutes for the audio and image experiments ----------------------


def test_criterion_9_substitutes():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    # linearly separable 3-class data with orthogonal one-hot descriptors
    centers = 3.0 * np.eye(3)
    labels = np.repeat(np.arange(3), 40)
    X = centers[labels] + 0.3 * rng.normal(size=(labels.size, 3))
    ds = Dataset(X, labels, labels, "multiclass")
    cfg = TrainConfig(loss="hinge", learning_rate=0.05, epochs=50, K=3, seed=0)
    rep = run_mtl_multiclass(ds, np.eye(3), cfg, Structure("linear"))
    acc = rep.notes["overall_accuracy"]
    elapsed = time.perf_counter() - t0
    check(9, acc == 1.0,
          "audio/image tables substituted by criteria 4 and 6 and the property suites; "
          f"separable 3-class MTL accuracy {acc:.3f} (= 1.0)", elapsed, 60)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except (AssertionError, pytest.skip.Exception):
                pass
