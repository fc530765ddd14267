"""Experiment runners: MDL, ZSDA, one-vs-rest MTL, ZSL and MDMT.

Each runner returns an :class:`ExperimentReport` whose rows are per-domain
(or per-class) metrics for the two-sided model, with baseline results under
``comparisons``.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from . import baselines as bl
from .data import EncodedData
from .descriptor import DISTRIBUTED, ONE_HOT_ATOMIC, ConcatSchema, DescriptorSchema
from .errors import (
    ConfigurationError,
    ProtocolViolationError,
    ShapeError,
    UnsupportedSchemaError,
)
from .metrics import argmax_lowest, metric_error_rate, metric_multiclass_acc, metric_rmse
from .model import Structure, effective_weight_matrix, effective_weights
from .optim import fit

log = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass
class Split:
    train: np.ndarray
    test: np.ndarray
    fraction: float
    seed: int
    stratification: str = "per_domain"


def make_split(strata, fraction=0.5, seed=0, stratification="per_domain"):
    """Deterministic train/test split.

    ``strata`` holds the domain (or class) index of each instance; with
    stratification the train fraction is applied within every stratum.
    """
    strata = np.asarray(strata).reshape(-1)
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    if stratification == "none":
        blocks = [np.arange(strata.shape[0])]
    elif stratification in ("per_domain", "per_class"):
        blocks = [np.flatnonzero(strata == s) for s in np.unique(strata)]
    else:
        raise ValueError(f"unknown stratification {stratification!r}")
    train, test = [], []
    for idx in blocks:
        idx = idx[rng.permutation(idx.shape[0])]
        n_train = int(np.floor(fraction * idx.shape[0] + 0.5))
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return Split(
        np.sort(np.concatenate(train)), np.sort(np.concatenate(test)),
        fraction, seed, stratification,
    )


def _jsonable(obj):
    if is_dataclass(obj):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(config):
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    setting: str
    metric: str
    rows: list
    aggregate: float
    config: dict = field(default_factory=dict)
    seed: int = 0
    aggregation: str = "mean"
    curves: dict = field(default_factory=dict)
    comparisons: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "version": REPORT_VERSION,
            "setting": self.setting,
            "metric": self.metric,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "config": _jsonable(self.config),
            "rows": [[str(name), float(v)] for name, v in self.rows],
            "aggregation": self.aggregation,
            "aggregate": float(self.aggregate),
            "comparisons": _jsonable(self.comparisons),
            "curves": {k: [[int(e), float(o)] for e, o in v] for k, v in self.curves.items()},
            "notes": _jsonable(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["setting"], d["metric"], [tuple(r) for r in d["rows"]], d["aggregate"],
            d.get("config", {}), d.get("seed", 0), d.get("aggregation", "mean"),
            {k: [tuple(p) for p in v] for k, v in d.get("curves", {}).items()},
            d.get("comparisons", {}), d.get("notes", {}),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _aggregate(rows, aggregation="mean", counts=None):
    vals = np.array([v for _, v in rows], dtype=np.float64)
    if aggregation == "mean":
        return float(vals.mean())
    if aggregation == "pooled_rmse":
        counts = np.asarray(counts, dtype=np.float64)
        return float(np.sqrt((counts * vals**2).sum() / counts.sum()))
    raise ValueError(aggregation)


def _metric_for(kind):
    if kind == "regression":
        return "rmse", metric_rmse
    if kind == "binary":
        return "error_rate", metric_error_rate
    raise ConfigurationError(f"no per-domain metric for task kind {kind!r}")


def domain_label(names, levels):
    return ",".join(f"{n}={v}" for n, v in zip(names, levels))


def _snapshot(config, **extra):
    snap = {"train": _jsonable(config)}
    snap.update(_jsonable(extra))
    return snap


def _loss_for(kind):
    return "squared" if kind == "regression" else "hinge"


def _check_loss(config, kind):
    if config.loss != _loss_for(kind):
        raise ConfigurationError(
            f"task kind {kind!r} needs {_loss_for(kind)} loss, config has {config.loss!r}"
        )


def _per_domain(preds, y, groups, test, metric_fn, labels):
    rows, counts = [], []
    for g, label in enumerate(labels):
        sel = test[groups[test] == g]
        if sel.size == 0:
            continue
        rows.append((label, metric_fn(preds[sel], y[sel])))
        counts.append(sel.size)
    return rows, counts


def _baseline_predictions(name, X, y, groups, M, train, config, kind, stl_lambda,
                          lams=(1e-3, 1e-3)):
    """Test-time predictions of a 1-of-N baseline for every instance."""
    key = name.upper().replace("-", "")
    if key in ("LR", "STL"):
        W = np.zeros((M, X.shape[1]))
        Wfit = bl.stl_fit(X[train], y[train], groups[train], _loss_for(kind), stl_lambda)
        W[: Wfit.shape[0]] = Wfit
        return np.einsum("nd,nd->n", X, W[groups]), []
    spec = bl.make_baseline(key, M, X.shape[1], lam_p=lams[0], lam_q=lams[1])
    model = bl.fit_baseline(spec, X[train], y[train], groups[train], config)
    Z = spec.schema.encode_many(groups.reshape(-1, 1))
    return model.predict(X, Z), model.curve


def _compare(names, X, y, groups, M, split, config, kind, stl_lambda, metric_fn, labels,
             aggregation="mean", lams=(1e-3, 1e-3)):
    out = {}
    for name in names:
        preds, _ = _baseline_predictions(
            name, X, y, groups, M, split.train, config, kind, stl_lambda, lams
        )
        rows, counts = _per_domain(preds, y, groups, split.test, metric_fn, labels)
        out[name] = {
            "rows": [[r, float(v)] for r, v in rows],
            "aggregate": _aggregate(rows, aggregation, counts),
        }
    return out


def run_mdl(dataset, schema, config, structure=None, baselines=(), fraction=0.5,
            split_seed=None, stl_lambda=1e-2, baseline_lams=(1e-3, 1e-3)):
    """Multi-domain learning: one model over all domains' training data."""
    _check_loss(config, dataset.kind)
    keys, groups = dataset.domains()
    if len(keys) < 2:
        raise ConfigurationError("multi-domain learning needs at least 2 domains")
    seed = config.seed if split_seed is None else split_seed
    split = make_split(groups, fraction, seed)
    metric_name, metric_fn = _metric_for(dataset.kind)
    data = dataset.encode(schema, groups)
    model = fit(_subset(data, split.train), config, structure)
    preds = model.predict(data.X, data.Z)
    labels = [domain_label(schema.names, k) for k in keys]
    rows, _ = _per_domain(preds, data.y, groups, split.test, metric_fn, labels)
    report = ExperimentReport(
        "mdl", metric_name, rows, _aggregate(rows),
        _snapshot(config, schema=_schema_dict(schema), fraction=fraction,
                  split_seed=seed, baselines=list(baselines), stl_lambda=stl_lambda),
        config.seed, curves={"ours": model.curve},
    )
    report.comparisons = _compare(
        baselines, data.X, data.y, groups, len(keys), split, config, dataset.kind,
        stl_lambda, metric_fn, labels, lams=baseline_lams,
    )
    report.notes["domain_weighting"] = config.domain_weighting
    report.model = model
    return report


def _subset(data, idx):
    # renumber so that domains absent from the subset do not count as empty
    _, groups = np.unique(data.groups[idx], return_inverse=True)
    return EncodedData(data.X[idx], data.Z[idx], data.y[idx], groups.reshape(-1))


def _schema_dict(schema):
    if isinstance(schema, ConcatSchema):
        return {"domain": _schema_dict(schema.domain), "task": _schema_dict(schema.task)}
    return {"factors": [list(f) for f in schema.factors], "mode": schema.mode,
            "shared_bias": schema.shared_bias}


def _require_distributed(schema):
    parts = [schema.domain, schema.task] if isinstance(schema, ConcatSchema) else [schema]
    for part in parts:
        if part.mode != DISTRIBUTED:
            raise UnsupportedSchemaError(
                "zero-shot domain adaptation needs a distributed descriptor: under "
                "one_hot_atomic encoding a held-out domain's descriptor row is never "
                "trained, so no model can be synthesised for it"
            )


def run_zsda(dataset, schema, config, structure=None, baselines=("LR", "TC"),
             fraction=0.5, split_seed=None, stl_lambda=1e-2, tc_rank=None, tc_iters=500,
             domains=None):
    """Zero-shot domain adaptation by leave-one-domain-out.

    For each held-out domain a model is trained on the other domains'
    training splits and its effective weights for the held-out descriptor are
    evaluated on the held-out test split (the same test split as MDL uses).
    Baselines: ``LR`` is a pooled ridge/hinge model with the descriptor
    appended as plain features; ``TC`` completes the tensor of per-domain
    models at the held-out grid cell.
    """
    _require_distributed(schema)
    _check_loss(config, dataset.kind)
    keys, groups = dataset.domains()
    if len(keys) < 2:
        raise ConfigurationError("leave-one-domain-out needs at least 2 domains")
    seed = config.seed if split_seed is None else split_seed
    split = make_split(groups, fraction, seed)
    metric_name, metric_fn = _metric_for(dataset.kind)
    data = dataset.encode(schema, groups)
    X, Z, y = data.X, data.Z, data.y
    labels = [domain_label(schema.names, k) for k in keys]
    held = range(len(keys)) if domains is None else domains
    loss = _loss_for(dataset.kind)
    rows, curves = [], {}
    comp_rows = {name: [] for name in baselines}
    for d in held:
        train = split.train[groups[split.train] != d]
        test = split.test[groups[split.test] == d]
        if test.size == 0:
            continue
        model = fit(_subset(data, train), config, structure)
        z_d = schema.encode_many(np.asarray(keys[d]).reshape(1, -1))[0]
        w = effective_weights(model, z_d)
        rows.append((labels[d], metric_fn(X[test] @ w, y[test])))
        curves[f"heldout:{labels[d]}"] = model.curve
        for name in baselines:
            key = name.upper()
            if key == "LR":
                Xa = np.hstack([X, Z])
                wb = bl.stl_fit(Xa[train], y[train], None, loss, stl_lambda)[0]
                preds = Xa[test] @ wb
            elif key == "TC":
                preds = X[test] @ _tc_weights(
                    X, y, groups, keys, train, d, schema, loss, stl_lambda, tc_rank, tc_iters
                )
            else:
                raise ConfigurationError(f"unknown ZSDA baseline {name!r}; use LR or TC")
            comp_rows[name].append((labels[d], metric_fn(preds, y[test])))
    report = ExperimentReport(
        "zsda", metric_name, rows, _aggregate(rows),
        _snapshot(config, schema=_schema_dict(schema), fraction=fraction, split_seed=seed,
                  baselines=list(baselines), stl_lambda=stl_lambda, tc_rank=tc_rank),
        config.seed, curves=curves,
    )
    report.comparisons = {
        name: {"rows": [[r, float(v)] for r, v in rs], "aggregate": _aggregate(rs)}
        for name, rs in comp_rows.items() if rs
    }
    return report


def _tc_weights(X, y, groups, keys, train, d, schema, loss, lam, rank, iters):
    """Held-out domain ``d``'s weights recovered by tensor completion."""
    models = []
    for g, key in enumerate(keys):
        if g == d:
            continue
        sel = train[groups[train] == g]
        if sel.size == 0:
            continue
        models.append((key, bl.stl_fit(X[sel], y[sel], None, loss, lam)[0]))
    tensor = bl.tensor_store(models, schema.cardinalities)
    done = bl.tensor_complete(tensor, rank, iters=iters, seed=0)
    return done.slice(keys[d])


def _class_descriptor_matrix(class_descriptors, C):
    Zc = np.atleast_2d(np.asarray(class_descriptors, dtype=np.float64))
    if Zc.shape[0] < C:
        raise ConfigurationError(
            f"class {Zc.shape[0]} has no descriptor ({Zc.shape[0]} descriptors for {C} classes)"
        )
    bad = np.flatnonzero(~np.isfinite(Zc).all(axis=1))
    if bad.size:
        raise ConfigurationError(f"class {int(bad[0])} has a missing descriptor")
    return Zc


def one_vs_rest_data(X, labels, class_descriptors):
    """All (instance, class descriptor, +-1) pairs; groups are class indices."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    C = class_descriptors.shape[0]
    n = X.shape[0]
    Xp = np.repeat(X, C, axis=0)
    cls = np.tile(np.arange(C), n)
    Zp = class_descriptors[cls]
    yp = np.where(np.repeat(labels, C) == cls, 1.0, -1.0)
    return EncodedData(Xp, Zp, yp, cls, n_groups=C)


def _classify(model, X, class_descriptors):
    W = effective_weight_matrix(model, class_descriptors)
    return argmax_lowest(np.asarray(X, dtype=np.float64) @ W.T)


def _per_class_rows(pred, labels, C, names=None):
    rows = []
    for c in range(C):
        sel = labels == c
        if sel.any():
            rows.append((names[c] if names else f"class={c}", metric_multiclass_acc(pred[sel], labels[sel])))
    return rows


def run_mtl_multiclass(dataset, class_descriptors, config, structure=None, fraction=0.5,
                       split_seed=None, class_names=None):
    """Multi-class classification as C one-vs-rest tasks sharing one model.

    Class descriptors are used only to build each class's classifier; the
    test-time prediction ranks all C classifiers' scores.
    """
    if config.loss != "hinge":
        raise ConfigurationError("one-vs-rest classification trains with hinge loss")
    labels = dataset.y.astype(np.int64)
    C = int(labels.max()) + 1
    if C < 2:
        raise ConfigurationError("need at least 2 classes")
    Zc = _class_descriptor_matrix(class_descriptors, C)
    seed = config.seed if split_seed is None else split_seed
    split = make_split(labels, fraction, seed, "per_class")
    model = fit(one_vs_rest_data(dataset.X[split.train], labels[split.train], Zc), config,
                structure)
    pred = _classify(model, dataset.X[split.test], Zc)
    rows = _per_class_rows(pred, labels[split.test], C, class_names)
    report = ExperimentReport(
        "mtl", "accuracy", rows, _aggregate(rows),
        _snapshot(config, fraction=fraction, split_seed=seed, n_classes=C),
        config.seed, curves={"ours": model.curve},
    )
    report.notes["overall_accuracy"] = metric_multiclass_acc(pred, labels[split.test])
    report.model = model
    return report


def run_zsl(train_dataset, train_class_descriptors, test_X, test_labels,
            novel_class_descriptors, config, structure=None, class_names=None):
    """Zero-shot recognition of novel classes from their descriptors.

    ``test_labels`` index rows of ``novel_class_descriptors``.
    """
    if config.loss != "hinge":
        raise ConfigurationError("zero-shot classification trains with hinge loss")
    seen = np.atleast_2d(np.asarray(train_class_descriptors, dtype=np.float64))
    novel = np.atleast_2d(np.asarray(novel_class_descriptors, dtype=np.float64))
    if seen.shape[1] != novel.shape[1]:
        raise ShapeError(f"seen descriptors have length {seen.shape[1]}, novel {novel.shape[1]}")
    for j, z in enumerate(novel):
        clash = np.flatnonzero(np.all(seen == z, axis=1))
        if clash.size:
            raise ProtocolViolationError(
                f"novel class {j} has the same descriptor as training class {int(clash[0])}; "
                "seen and novel label spaces must be disjoint"
            )
    labels = train_dataset.y.astype(np.int64)
    Zc = _class_descriptor_matrix(seen, int(labels.max()) + 1)
    model = fit(one_vs_rest_data(train_dataset.X, labels, Zc), config, structure)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    pred = _classify(model, test_X, novel)
    rows = _per_class_rows(pred, test_labels, novel.shape[0], class_names)
    report = ExperimentReport(
        "zsl", "accuracy", rows, _aggregate(rows),
        _snapshot(config, n_seen=seen.shape[0], n_novel=novel.shape[0]),
        config.seed, curves={"ours": model.curve},
    )
    report.notes["overall_accuracy"] = metric_multiclass_acc(pred, test_labels)
    report.model = model
    return report


def run_mdmt(dataset, domain_schema, task_schema, config, structure=None, baselines=(),
             compare_atomic=True, fraction=0.5, split_seed=None, stl_lambda=1e-2,
             baseline_lams=(1e-3, 1e-3)):
    """Simultaneous multi-domain multi-task learning with concatenated descriptors.

    ``dataset.levels`` holds the domain levels followed by the task levels.
    The aggregate is the RMSE over all test records. With ``compare_atomic``
    the same trainer is also run on a 1-of-N code over every (domain, task)
    combination.
    """
    _check_loss(config, dataset.kind)
    joint = ConcatSchema(domain_schema, task_schema)
    keys, groups = dataset.domains()
    seed = config.seed if split_seed is None else split_seed
    split = make_split(groups, fraction, seed)
    metric_name, metric_fn = _metric_for(dataset.kind)
    aggregation = "pooled_rmse" if metric_name == "rmse" else "mean"
    labels = [domain_label(joint.names, k) for k in keys]

    def _run(schema):
        data = dataset.encode(schema, groups)
        model = fit(_subset(data, split.train), config, structure)
        preds = model.predict(data.X, data.Z)
        rows, counts = _per_domain(preds, data.y, groups, split.test, metric_fn, labels)
        return rows, counts, model

    rows, counts, model = _run(joint)
    report = ExperimentReport(
        "mdmt", metric_name, rows, _aggregate(rows, aggregation, counts),
        _snapshot(config, schema=_schema_dict(joint), fraction=fraction, split_seed=seed,
                  baselines=list(baselines), stl_lambda=stl_lambda),
        config.seed, aggregation=aggregation, curves={"ours": model.curve},
    )
    if compare_atomic:
        atomic = DescriptorSchema(joint.factors, ONE_HOT_ATOMIC, shared_bias=False)
        arows, acounts, amodel = _run(atomic)
        report.comparisons["atomic"] = {
            "rows": [[r, float(v)] for r, v in arows],
            "aggregate": _aggregate(arows, aggregation, acounts),
        }
        report.curves["atomic"] = amodel.curve
    data = dataset.encode(joint, groups)
    report.comparisons.update(_compare(
        baselines, data.X, data.y, groups, len(keys), split, config, dataset.kind,
        stl_lambda, metric_fn, labels, aggregation, baseline_lams,
    ))
    report.model = model
    return report


def run_baseline(dataset, name, config, fraction=0.5, split_seed=None, stl_lambda=1e-2,
                 lams=(1e-3, 1e-3)):
    """A single 1-of-N baseline in the multi-domain setting."""
    _check_loss(config, dataset.kind)
    keys, groups = dataset.domains()
    seed = config.seed if split_seed is None else split_seed
    split = make_split(groups, fraction, seed)
    metric_name, metric_fn = _metric_for(dataset.kind)
    preds, curve = _baseline_predictions(
        name, dataset.X, dataset.y, groups, len(keys), split.train, config, dataset.kind,
        stl_lambda, lams,
    )
    labels = [domain_label(dataset.factor_names, k) for k in keys]
    rows, _ = _per_domain(preds, dataset.y, groups, split.test, metric_fn, labels)
    return ExperimentReport(
        f"baseline:{name.upper()}", metric_name, rows, _aggregate(rows),
        _snapshot(config, baseline=name, fraction=fraction, split_seed=seed,
                  stl_lambda=stl_lambda, lams=list(lams)),
        config.seed, curves={name.upper(): curve} if curve else {},
    )
