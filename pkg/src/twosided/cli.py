"""Command-line entry point.

    twosided <command> --config FILE [--seed N] [--out FILE] [--model FILE] [--quiet]

Commands: train, eval, mdl, zsda, zsl, mtl, mdmt, synth, baseline. Reports
are written as JSON to ``--out`` (stdout when omitted). Failures print one
``error: <Kind>: <message>`` line on stderr and exit with status 1.
"""
import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import protocols
from .config import load_config
from .data import Dataset
from .descriptor import DescriptorSchema
from .errors import ConfigurationError, TwoSidedError
from .ingest import (
    finalize,
    load_class_descriptors,
    load_csv,
    load_restaurant,
    load_school,
    write_class_descriptors,
    write_csv,
)
from .metrics import metric_error_rate, metric_rmse
from .model import Structure, load_model, save_model
from .optim import fit
from .synth import synth_generate

log = logging.getLogger("twosided")

COMMANDS = ("train", "eval", "mdl", "zsda", "zsl", "mtl", "mdmt", "synth", "baseline")


def _with_mode(schema, cfg):
    return DescriptorSchema(schema.factors, cfg.schema.mode, cfg.schema.shared_bias)


def load_data(cfg):
    """Dataset plus ``(domain_schema, task_schema)``; task schema may be None."""
    dc = cfg.dataset
    if dc.source == "csv":
        ds, schema = load_csv(dc)
        if dc.task_factors:
            names = schema.names
            nt = len(dc.task_factors)
            if names[-nt:] != list(dc.task_factors):
                raise ConfigurationError("task_factors must be the last entries of factors")
            dom = DescriptorSchema(schema.factors[:-nt], cfg.schema.mode, cfg.schema.shared_bias)
            task = DescriptorSchema(schema.factors[-nt:], cfg.schema.mode)
            return ds, dom, task
        return ds, _with_mode(schema, cfg), None
    if dc.source == "school":
        ds, schema = load_school(dc.path, dc.min_students_per_year)
        return finalize(ds, dc), _with_mode(schema, cfg), None
    if dc.source == "restaurant":
        ds, dom, task = load_restaurant(dc.path)
        return finalize(ds, dc), _with_mode(dom, cfg), _with_mode(task, cfg)
    if dc.source == "synthetic":
        if cfg.synthetic is None:
            raise ConfigurationError("source = synthetic needs a [synthetic] section")
        ds, schema, _ = synth_generate(cfg.synthetic)
        return finalize(ds, dc), _with_mode(schema, cfg), None
    raise ConfigurationError(f"unknown dataset source {dc.source!r}")


def _structure(cfg):
    return Structure(cfg.protocol.activation)


def _joint(dom, task):
    from .descriptor import ConcatSchema

    return dom if task is None else ConcatSchema(dom, task)


def _cmd_train(cfg, args):
    ds, dom, task = load_data(cfg)
    schema = _joint(dom, task)
    keys, groups = ds.domains()
    split = protocols.make_split(groups, cfg.dataset.split_fraction, cfg.dataset.split_seed)
    data = ds.encode(schema, groups)
    model = fit(protocols._subset(data, split.train), cfg.train, _structure(cfg))
    if args.model:
        save_model(model, args.model)
    rows = _evaluate(model, data, ds.kind, groups, split.train, schema, keys)
    return protocols.ExperimentReport(
        "train", _metric_name(ds.kind), rows, protocols._aggregate(rows),
        protocols._snapshot(cfg.train, dataset=cfg.dataset), cfg.train.seed,
        curves={"ours": model.curve}, notes={"final_objective": model.curve[-1][1]},
    )


def _metric_name(kind):
    return protocols._metric_for(kind)[0]


def _evaluate(model, data, kind, groups, idx, schema, keys):
    _, fn = protocols._metric_for(kind)
    preds = model.predict(data.X, data.Z)
    labels = [protocols.domain_label(schema.names, k) for k in keys]
    rows, _ = protocols._per_domain(preds, data.y, groups, idx, fn, labels)
    return rows


def _cmd_eval(cfg, args):
    if not args.model:
        raise ConfigurationError("eval needs --model")
    model = load_model(args.model)
    ds, dom, task = load_data(cfg)
    schema = _joint(dom, task)
    keys, groups = ds.domains()
    split = protocols.make_split(groups, cfg.dataset.split_fraction, cfg.dataset.split_seed)
    rows = _evaluate(model, ds.encode(schema, groups), ds.kind, groups, split.test, schema, keys)
    return protocols.ExperimentReport(
        "eval", _metric_name(ds.kind), rows, protocols._aggregate(rows),
        protocols._snapshot(cfg.train, dataset=cfg.dataset, model=args.model), cfg.train.seed,
    )


def _lams(cfg):
    return (cfg.baseline.lam_p, cfg.baseline.lam_q)


def _common(cfg):
    return dict(fraction=cfg.dataset.split_fraction, split_seed=cfg.dataset.split_seed)


def _cmd_mdl(cfg, args):
    ds, dom, task = load_data(cfg)
    return protocols.run_mdl(
        ds, _joint(dom, task), cfg.train, _structure(cfg), baselines=cfg.protocol.baselines,
        stl_lambda=cfg.baseline.stl_lambda, baseline_lams=_lams(cfg), **_common(cfg),
    )


def _cmd_zsda(cfg, args):
    ds, dom, task = load_data(cfg)
    return protocols.run_zsda(
        ds, _joint(dom, task), cfg.train, _structure(cfg),
        baselines=cfg.protocol.baselines or ("LR", "TC"), stl_lambda=cfg.baseline.stl_lambda,
        tc_rank=cfg.protocol.tc_rank or None, tc_iters=cfg.protocol.tc_iters, **_common(cfg),
    )


def _cmd_mdmt(cfg, args):
    ds, dom, task = load_data(cfg)
    if task is None:
        raise ConfigurationError("mdmt needs a task schema (task_factors or the restaurant loader)")
    return protocols.run_mdmt(
        ds, dom, task, cfg.train, _structure(cfg), baselines=cfg.protocol.baselines,
        compare_atomic=cfg.protocol.compare_atomic, stl_lambda=cfg.baseline.stl_lambda,
        baseline_lams=_lams(cfg), **_common(cfg),
    )


def _class_data(cfg):
    if not cfg.dataset.class_descriptors:
        raise ConfigurationError("[dataset] class_descriptors must name a descriptor CSV")
    dc = replace(cfg.dataset, task_kind="multiclass")
    ds, _ = load_csv(dc)
    Zc, names = load_class_descriptors(cfg.dataset.class_descriptors, dc.delimiter)
    if cfg.schema.shared_bias:
        Zc = np.hstack([Zc, np.ones((Zc.shape[0], 1))])
    return ds, Zc, names


def _cmd_mtl(cfg, args):
    ds, Zc, names = _class_data(cfg)
    return protocols.run_mtl_multiclass(
        ds, Zc, replace(cfg.train, loss="hinge"), _structure(cfg), class_names=None,
        **_common(cfg),
    )


def _cmd_zsl(cfg, args):
    ds, Zc, names = _class_data(cfg)
    novel = sorted(set(cfg.dataset.novel_classes))
    if not novel:
        raise ConfigurationError("[dataset] novel_classes must list the held-out class indices")
    C = Zc.shape[0]
    seen = [c for c in range(C) if c not in novel]
    labels = ds.y.astype(np.int64)
    remap_seen = {c: i for i, c in enumerate(seen)}
    remap_novel = {c: i for i, c in enumerate(novel)}
    tr = np.flatnonzero(np.isin(labels, seen))
    te = np.flatnonzero(np.isin(labels, novel))
    train = Dataset(ds.X[tr], [remap_seen[c] for c in labels[tr]], np.zeros(tr.size), "multiclass")
    return protocols.run_zsl(
        train, Zc[seen], ds.X[te], [remap_novel[c] for c in labels[te]], Zc[novel],
        replace(cfg.train, loss="hinge"), _structure(cfg),
        class_names=[f"class={c}" for c in novel],
    )


def _cmd_baseline(cfg, args):
    if not cfg.baseline.name:
        raise ConfigurationError("[baseline] name is required")
    ds, _, _ = load_data(cfg)
    return protocols.run_baseline(ds, cfg.baseline.name, cfg.train,
                                  stl_lambda=cfg.baseline.stl_lambda, lams=_lams(cfg),
                                  **_common(cfg))


def _cmd_synth(cfg, args):
    if cfg.synthetic is None:
        raise ConfigurationError("synth needs a [synthetic] section in the spec file")
    if not args.out:
        raise ConfigurationError("synth needs --out")
    ds, schema, oracle = synth_generate(cfg.synthetic)
    write_csv(ds, args.out, schema.names)
    if cfg.synthetic.world == "attribute_classes":
        path = args.out.rsplit(".", 1)[0] + ".classes.csv"
        write_class_descriptors(oracle.params["attributes"], path)
        log.info("wrote class descriptors to %s", path)
    log.info("wrote %d instances to %s", len(ds), args.out)
    return None


HANDLERS = {
    "train": _cmd_train, "eval": _cmd_eval, "mdl": _cmd_mdl, "zsda": _cmd_zsda,
    "zsl": _cmd_zsl, "mtl": _cmd_mtl, "mdmt": _cmd_mdmt, "synth": _cmd_synth,
    "baseline": _cmd_baseline,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="twosided", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "synth":
            p.add_argument("--spec", "--config", dest="config", required=True)
        else:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--model")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s", stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.train = replace(cfg.train, seed=args.seed)
            if cfg.synthetic is not None:
                cfg.synthetic = replace(cfg.synthetic, seed=args.seed)
        report = HANDLERS[args.command](cfg, args)
    except (TwoSidedError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    if report is not None:
        if args.out:
            report.save(args.out)
        else:
            sys.stdout.write(report.to_json())
        if not args.quiet:
            log.info("%s %s aggregate=%.6g", report.setting, report.metric, report.aggregate)
    return 0


if __name__ == "__main__":
    sys.exit(main())
