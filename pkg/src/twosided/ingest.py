"""CSV ingestion, the school / restaurant loaders and CSV export.

CSV files are UTF-8 with a header row and ``.`` as decimal separator.
"""
import csv
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .descriptor import DISTRIBUTED, DescriptorSchema
from .errors import EmptyDatasetError, LoaderError, ParseError
from .protocols import make_split

log = logging.getLogger(__name__)


@dataclass
class DatasetConfig:
    source: str = "csv"
    path: str = ""
    delimiter: str = ","
    features: list = field(default_factory=list)
    label: str = "y"
    factors: list = field(default_factory=list)
    cardinalities: list = field(default_factory=list)
    task_factors: list = field(default_factory=list)
    task_kind: str = "regression"
    standardize: bool = False
    append_bias_feature: bool = False
    split_fraction: float = 0.5
    split_seed: int = 0
    min_students_per_year: int = 50
    class_descriptors: str = ""
    novel_classes: list = field(default_factory=list)


def _read_table(path, delimiter=","):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except FileNotFoundError as exc:
        raise LoaderError(f"{path}: file not found") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyDatasetError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyDatasetError(f"{path}: header but no data rows")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(r)} cells, header has {len(header)}")
    return header, body


def _column(header, name, path):
    try:
        return header.index(name)
    except ValueError:
        raise ParseError(f"{path}: missing column {name!r}") from None


def _numeric(body, cols, header, path):
    out = np.empty((len(body), len(cols)))
    for i, row in enumerate(body):
        for j, c in enumerate(cols):
            try:
                out[i, j] = float(row[c])
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {row[c]!r} at row {i + 2}, column {header[c]!r}"
                ) from None
    return out


def _sort_key(v):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def _levels(values, card=None, name="factor"):
    """Map categorical values to 0..card-1 (sorted, numeric-aware)."""
    if card:
        try:
            idx = np.array([int(float(v)) for v in values])
        except ValueError:
            raise ParseError(f"factor {name!r} must hold integer levels when a cardinality is given")
        if idx.min() < 0 or idx.max() >= card:
            raise ParseError(f"factor {name!r} has levels outside 0..{card - 1}")
        return idx, [str(i) for i in range(card)]
    uniq = sorted(set(values), key=_sort_key)
    lookup = {v: i for i, v in enumerate(uniq)}
    return np.array([lookup[v] for v in values]), uniq


def standardize_features(X, train_idx):
    """z-score columns with statistics from ``train_idx`` rows only."""
    mu = X[train_idx].mean(axis=0)
    sd = X[train_idx].std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd, mu, sd


def finalize(ds, cfg):
    """Apply standardisation and the bias feature as configured."""
    if cfg.standardize:
        _, groups = ds.domains()
        split = make_split(groups, cfg.split_fraction, cfg.split_seed)
        ds.X, _, _ = standardize_features(ds.X, split.train)
    if cfg.append_bias_feature:
        ds.X = np.hstack([ds.X, np.ones((len(ds), 1))])
        ds.feature_names = list(ds.feature_names) + ["bias"]
    return ds


def load_csv(cfg):
    """Generic CSV ingestion; returns ``(dataset, schema)``.

    Factor columns become descriptor factors in the given order. Feature
    columns default to every column that is neither the label nor a factor.
    """
    path = cfg.path
    header, body = _read_table(path, cfg.delimiter)
    label_col = _column(header, cfg.label, path)
    factor_cols = [_column(header, f, path) for f in cfg.factors]
    if cfg.features:
        feat_cols = [_column(header, f, path) for f in cfg.features]
    else:
        skip = {label_col, *factor_cols}
        feat_cols = [i for i in range(len(header)) if i not in skip]
    if not feat_cols:
        raise ParseError(f"{path}: no feature columns")
    X = _numeric(body, feat_cols, header, path)
    y = _numeric(body, [label_col], header, path)[:, 0]
    cards = list(cfg.cardinalities) or [None] * len(factor_cols)
    if len(cards) != len(factor_cols):
        raise ParseError("cardinalities must list one value per factor column")
    levels, factors = [], []
    for c, card, name in zip(factor_cols, cards, cfg.factors):
        idx, uniq = _levels([row[c].strip() for row in body], card, name)
        levels.append(idx)
        factors.append((name, len(uniq)))
    if not levels:
        levels.append(np.zeros(len(body), dtype=np.int64))
        factors.append(("all", 1))
    ds = Dataset(X, y, np.column_stack(levels), cfg.task_kind,
                 [header[c] for c in feat_cols], [n for n, _ in factors])
    schema = DescriptorSchema(tuple(factors), DISTRIBUTED)
    return finalize(ds, cfg), schema


SCHOOL_LAYOUT = "school, year, score, then exactly 23 numeric feature columns"


def load_school(path, min_students_per_year=50, n_features=23):
    """School exam-score data.

    Assumed layout: a header with ``school`` (id), ``year`` (year group, three
    distinct values), ``score`` (exam score, the regression target) and the 23
    remaining numeric student/school features. With ``min_students_per_year``
    > 0 only schools whose every year group has more than that many students
    are kept; 0 keeps every school. Rows are never modified, only filtered.
    """
    header, body = _read_table(path)
    missing = [c for c in ("school", "year", "score") if c not in header]
    if missing:
        raise LoaderError(f"{path}: missing column(s) {missing}; expected layout: {SCHOOL_LAYOUT}")
    s_col, y_col, t_col = (header.index(c) for c in ("school", "year", "score"))
    feat_cols = [i for i in range(len(header)) if i not in (s_col, y_col, t_col)]
    if n_features is not None and len(feat_cols) != n_features:
        raise LoaderError(
            f"{path}: found {len(feat_cols)} feature columns, expected {n_features}; "
            f"expected layout: {SCHOOL_LAYOUT}"
        )
    schools = [r[s_col].strip() for r in body]
    years = [r[y_col].strip() for r in body]
    year_values = sorted(set(years), key=_sort_key)
    if len(year_values) != 3:
        raise LoaderError(f"{path}: expected 3 year groups, found {len(year_values)}")
    counts = Counter(zip(schools, years))
    if min_students_per_year > 0:
        keep = {
            s for s in set(schools)
            if all(counts.get((s, yv), 0) > min_students_per_year for yv in year_values)
        }
    else:
        keep = set(schools)
    rows = [i for i, s in enumerate(schools) if s in keep]
    if not rows:
        raise EmptyDatasetError(f"{path}: no school passes the filter")
    body = [body[i] for i in rows]
    X = _numeric(body, feat_cols, header, path)
    y = _numeric(body, [t_col], header, path)[:, 0]
    s_idx, s_uniq = _levels([schools[i] for i in rows])
    y_idx, _ = _levels([years[i] for i in rows])
    ds = Dataset(X, y, np.column_stack([s_idx, y_idx]), "regression",
                 [header[c] for c in feat_cols], ["school", "year"])
    log.info("school data: %d students, %d schools, %d domains", len(ds), len(s_uniq),
             len(ds.domains()[0]))
    schema = DescriptorSchema((("school", len(s_uniq)), ("year", 3)), DISTRIBUTED)
    return ds, schema


RESTAURANT_TASKS = ("food", "service", "overall")
RESTAURANT_LAYOUT = "restaurant, food, service, overall, then exactly 43 numeric feature columns"


def load_restaurant(path, n_restaurants=8, n_features=43):
    """Restaurant & consumer ratings as a multi-domain multi-task problem.

    Assumed layout: ``restaurant`` (id), the three scores ``food``,
    ``service`` and ``overall``, and 43 numeric features. The most frequently
    rated restaurants are kept (ties broken by id) and each record becomes
    three instances, one per score. Returns ``(dataset, domain_schema,
    task_schema)``; levels are (restaurant, task).
    """
    header, body = _read_table(path)
    need = ("restaurant",) + RESTAURANT_TASKS
    missing = [c for c in need if c not in header]
    if missing:
        raise LoaderError(
            f"{path}: missing column(s) {missing}; expected layout: {RESTAURANT_LAYOUT}"
        )
    r_col = header.index("restaurant")
    task_cols = [header.index(t) for t in RESTAURANT_TASKS]
    feat_cols = [i for i in range(len(header)) if i != r_col and i not in task_cols]
    if n_features is not None and len(feat_cols) != n_features:
        raise LoaderError(
            f"{path}: found {len(feat_cols)} feature columns, expected {n_features}; "
            f"expected layout: {RESTAURANT_LAYOUT}"
        )
    ids = [r[r_col].strip() for r in body]
    freq = Counter(ids)
    ranked = sorted(freq, key=lambda k: (-freq[k], _sort_key(k)))
    keep = sorted(ranked[:n_restaurants], key=_sort_key)
    lookup = {k: i for i, k in enumerate(keep)}
    rows = [i for i, k in enumerate(ids) if k in lookup]
    body = [body[i] for i in rows]
    X = _numeric(body, feat_cols, header, path)
    scores = _numeric(body, task_cols, header, path)
    rest = np.array([lookup[ids[i]] for i in rows])
    n, T = len(body), len(RESTAURANT_TASKS)
    levels = np.column_stack([np.repeat(rest, T), np.tile(np.arange(T), n)])
    ds = Dataset(np.repeat(X, T, axis=0), scores.reshape(-1), levels, "regression",
                 [header[c] for c in feat_cols], ["restaurant", "task"])
    domain_schema = DescriptorSchema((("restaurant", len(keep)),), DISTRIBUTED)
    task_schema = DescriptorSchema((("task", T),), DISTRIBUTED)
    return ds, domain_schema, task_schema


def load_class_descriptors(path, delimiter=","):
    """Class descriptor table: a ``class`` column then one numeric column per entry.

    Rows are returned in ascending class order.
    """
    header, body = _read_table(path, delimiter)
    c_col = _column(header, "class", path)
    cols = [i for i in range(len(header)) if i != c_col]
    Z = _numeric(body, cols, header, path)
    classes = [r[c_col].strip() for r in body]
    idx, uniq = _levels(classes)
    if len(uniq) != len(classes):
        raise ParseError(f"{path}: duplicate class rows")
    out = np.empty_like(Z)
    out[idx] = Z
    return out, uniq


def write_csv(ds, path, factor_names=None):
    """Write features, factor levels and label with round-trip float precision."""
    names = factor_names or ds.factor_names or [f"f{i}" for i in range(ds.levels.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + list(names) + ["y"])
        for x, lv, y in zip(ds.X, ds.levels, ds.y):
            w.writerow([repr(float(v)) for v in x] + [int(v) for v in lv] + [repr(float(y))])


def write_class_descriptors(Z, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["class"] + [f"a{j}" for j in range(Z.shape[1])])
        for c, z in enumerate(Z):
            w.writerow([c] + [repr(float(v)) for v in z])
