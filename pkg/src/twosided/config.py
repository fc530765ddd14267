"""Experiment configuration files.

Flat sectioned key-value text (INI) with the sections ``dataset``,
``schema``, ``train``, ``baseline``, ``protocol`` and, for ``synth``,
``synthetic``. Lists are comma separated. Example::

    [dataset]
    source = csv
    path = data.csv
    label = y
    factors = f0, f1
    standardize = true

    [schema]
    mode = distributed

    [train]
    learning_rate = 0.01
    epochs = 200
    reg_q = l1
    reg_q_strength = 0.001
"""
import configparser
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError
from .ingest import DatasetConfig
from .optim import RegSpec, TrainConfig
from .synth import SyntheticSpec

SECTIONS = ("dataset", "schema", "train", "baseline", "protocol", "synthetic")


@dataclass
class SchemaConfig:
    mode: str = "distributed"
    shared_bias: bool = False


@dataclass
class BaselineConfig:
    name: str = ""
    lam_p: float = 1e-3
    lam_q: float = 1e-3
    stl_lambda: float = 1e-2


@dataclass
class ProtocolConfig:
    baselines: list = field(default_factory=list)
    activation: str = "relu"
    tc_rank: int = 0
    tc_iters: int = 500
    compare_atomic: bool = True


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    synthetic: SyntheticSpec | None = None


_INT_LISTS = {"cardinalities", "novel_classes"}
_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _parse_value(raw, default, where, key=""):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, (list, tuple)):
            items = [v.strip() for v in raw.split(",") if v.strip()]
            if key in _INT_LISTS:
                items = [int(v) for v in items]
            return type(default)(items) if isinstance(default, tuple) else items
    except (KeyError, ValueError):
        raise ConfigurationError(f"{where}: cannot parse {raw!r} as {type(default).__name__}")
    return raw


def _fill(cls, section, where, defaults=None, skip=()):
    obj = defaults if defaults is not None else cls()
    known = {f.name for f in fields(cls)} - set(skip)
    values = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigurationError(f"[{where}] unknown key {key!r}")
        values[key] = _parse_value(raw, getattr(obj, key), f"[{where}] {key}", key)
    return values


def _train_from(section):
    values = _fill(TrainConfig, {k: v for k, v in section.items()
                                 if k not in ("reg_p", "reg_q", "reg_p_strength",
                                              "reg_q_strength", "K")},
                   "train")
    if "K" in section or "k" in section:
        raw = section.get("K", section.get("k")).strip()
        values["K"] = raw if raw == "auto" else int(raw)
    for side in ("reg_p", "reg_q"):
        kind = section.get(side, "none").strip()
        strength = float(section.get(f"{side}_strength", "0"))
        values[side] = RegSpec(kind, strength)
    return TrainConfig(**values)


def parse_config(text):
    """Parse configuration text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}".splitlines()[0]) from exc
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigurationError(f"unknown config section(s) {unknown}; expected {SECTIONS}")
    cfg = ExperimentConfig()
    try:
        if cp.has_section("dataset"):
            cfg.dataset = DatasetConfig(**_fill(DatasetConfig, cp["dataset"], "dataset"))
        if cp.has_section("schema"):
            cfg.schema = SchemaConfig(**_fill(SchemaConfig, cp["schema"], "schema"))
        if cp.has_section("train"):
            cfg.train = _train_from(cp["train"])
        if cp.has_section("baseline"):
            cfg.baseline = BaselineConfig(**_fill(BaselineConfig, cp["baseline"], "baseline"))
        if cp.has_section("protocol"):
            cfg.protocol = ProtocolConfig(**_fill(ProtocolConfig, cp["protocol"], "protocol"))
        if cp.has_section("synthetic"):
            cfg.synthetic = SyntheticSpec(**_fill(SyntheticSpec, cp["synthetic"], "synthetic"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc
    if cfg.dataset.delimiter.lower() == "tab":
        cfg.dataset.delimiter = "\t"
    if cfg.schema.mode not in ("distributed", "one_hot_atomic"):
        raise ConfigurationError("[schema] mode must be distributed or one_hot_atomic")
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None


def _fmt(v):
    if v == "\t":
        return "tab"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _section_items(obj):
    return [(f.name, getattr(obj, f.name)) for f in fields(obj)]


def serialize_config(cfg):
    """Canonical text form; ``parse_config(serialize_config(c))`` equals ``c``."""
    lines = []
    for name in SECTIONS:
        obj = getattr(cfg, name)
        if obj is None:
            continue
        lines.append(f"[{name}]")
        for key, value in _section_items(obj):
            if isinstance(value, RegSpec):
                lines.append(f"{key} = {value.kind}")
                lines.append(f"{key}_strength = {_fmt(float(value.strength))}")
            else:
                lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)
