"""Semantic descriptor schemas and their encodings.

A schema declares an ordered list of categorical factors. Each domain (or task)
is one combination of factor levels and is encoded as a vector ``z``:

* ``distributed``: one one-hot block per factor, concatenated in declaration
  order. Combinations never seen in training still get a meaningful code.
* ``one_hot_atomic``: a single indicator over all level combinations (the
  classic 1-of-N task index).

With ``shared_bias`` an always-one entry is appended last.
"""
import itertools
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import InvalidLevelError, SchemaError

DISTRIBUTED = "distributed"
ONE_HOT_ATOMIC = "one_hot_atomic"
MODES = (DISTRIBUTED, ONE_HOT_ATOMIC)


@dataclass(frozen=True)
class DescriptorSchema:
    factors: tuple
    mode: str = DISTRIBUTED
    shared_bias: bool = False

    def __post_init__(self):
        factors = []
        for item in self.factors:
            try:
                name, card = item
            except (TypeError, ValueError):
                raise SchemaError(f"factor must be a (name, cardinality) pair, got {item!r}")
            # continuous or periodic factors are not supported
            if isinstance(card, bool) or not isinstance(card, (int, np.integer)):
                raise SchemaError(
                    f"factor {name!r}: only categorical factors with an integer "
                    f"cardinality are supported, got {card!r}"
                )
            if card < 1:
                raise SchemaError(f"factor {name!r}: cardinality must be >= 1, got {card}")
            factors.append((str(name), int(card)))
        names = [n for n, _ in factors]
        if len(set(names)) != len(names):
            raise SchemaError(f"factor names must be unique, got {names}")
        if self.mode not in MODES:
            raise SchemaError(f"unknown descriptor mode {self.mode!r}; expected one of {MODES}")
        object.__setattr__(self, "factors", tuple(factors))
        object.__setattr__(self, "shared_bias", bool(self.shared_bias))

    @property
    def names(self):
        return [n for n, _ in self.factors]

    @property
    def cardinalities(self):
        return tuple(c for _, c in self.factors)

    @property
    def n_combinations(self):
        return prod(self.cardinalities)

    @property
    def length(self):
        """Encoded length ``B``."""
        body = self.n_combinations if self.mode == ONE_HOT_ATOMIC else sum(self.cardinalities)
        return body + int(self.shared_bias)

    B = length

    def _levels_tuple(self, levels):
        if isinstance(levels, dict):
            missing = [n for n in self.names if n not in levels]
            if missing:
                raise InvalidLevelError(f"no level given for factor(s) {missing}")
            levels = [levels[n] for n in self.names]
        levels = tuple(int(v) for v in levels)
        if len(levels) != len(self.factors):
            raise InvalidLevelError(
                f"expected {len(self.factors)} levels ({self.names}), got {len(levels)}"
            )
        for (name, card), lv in zip(self.factors, levels):
            if not 0 <= lv < card:
                raise InvalidLevelError(
                    f"level {lv} out of range for factor {name!r} with cardinality {card}"
                )
        return levels

    def combination_index(self, levels):
        return int(np.ravel_multi_index(self._levels_tuple(levels), self.cardinalities))

    def encode(self, levels):
        return encode(self, levels)

    def encode_many(self, levels):
        """Vectorised encoding of an ``(N, F)`` integer array of levels."""
        levels = np.asarray(levels, dtype=np.int64).reshape(-1, len(self.factors))
        cards = np.asarray(self.cardinalities)
        bad = (levels < 0) | (levels >= cards)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise InvalidLevelError(
                f"level {levels[row, col]} out of range for factor "
                f"{self.names[col]!r} with cardinality {cards[col]} (row {row})"
            )
        n = levels.shape[0]
        Z = np.zeros((n, self.length))
        rows = np.arange(n)
        if self.mode == DISTRIBUTED:
            offset = 0
            for f, card in enumerate(cards):
                Z[rows, offset + levels[:, f]] = 1.0
                offset += card
        elif n:
            Z[rows, np.ravel_multi_index(levels.T, tuple(cards))] = 1.0
        if self.shared_bias:
            Z[:, -1] = 1.0
        return Z

    def combinations(self):
        """All level tuples, lexicographic with the last factor varying fastest."""
        return list(itertools.product(*(range(c) for c in self.cardinalities)))


@dataclass(frozen=True)
class Descriptor:
    levels: tuple
    encoded: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.array(self.encoded, dtype=np.float64).reshape(-1)
        vec.setflags(write=False)
        object.__setattr__(self, "encoded", vec)
        object.__setattr__(self, "levels", tuple(self.levels))

    def __len__(self):
        return self.encoded.shape[0]


def encode(schema, levels):
    """Encode one level combination under ``schema``."""
    levels = schema._levels_tuple(levels)
    return Descriptor(levels, schema.encode_many([levels])[0])


def concat_mdmt(domain_desc, task_desc):
    """Joint multi-domain multi-task descriptor: domain code followed by task code."""
    return Descriptor(
        tuple(domain_desc.levels) + tuple(task_desc.levels),
        np.concatenate([domain_desc.encoded, task_desc.encoded]),
    )


def schema_matrix(schema):
    """One row per level combination, in :meth:`DescriptorSchema.combinations` order."""
    combos = schema.combinations()
    return schema.encode_many(np.asarray(combos, dtype=np.int64).reshape(len(combos), -1))


class ConcatSchema:
    """Concatenation of a domain schema and a task schema.

    Instances carry the domain levels first and the task levels after them;
    each instance is encoded with :func:`concat_mdmt`.
    """

    def __init__(self, domain, task):
        clash = set(domain.names) & set(task.names)
        if clash:
            raise SchemaError(f"domain and task schemas share factor names {sorted(clash)}")
        self.domain = domain
        self.task = task

    @property
    def factors(self):
        return self.domain.factors + self.task.factors

    @property
    def names(self):
        return self.domain.names + self.task.names

    @property
    def cardinalities(self):
        return self.domain.cardinalities + self.task.cardinalities

    @property
    def mode(self):
        if self.domain.mode == self.task.mode:
            return self.domain.mode
        return "mixed"

    @property
    def length(self):
        return self.domain.length + self.task.length

    B = length

    def encode(self, levels):
        levels = tuple(levels)
        nd = len(self.domain.factors)
        return concat_mdmt(encode(self.domain, levels[:nd]), encode(self.task, levels[nd:]))

    def encode_many(self, levels):
        levels = np.asarray(levels, dtype=np.int64).reshape(-1, len(self.factors))
        nd = len(self.domain.factors)
        return np.hstack(
            [self.domain.encode_many(levels[:, :nd]), self.task.encode_many(levels[:, nd:])]
        )

    def combinations(self):
        return list(itertools.product(*(range(c) for c in self.cardinalities)))

    def __repr__(self):
        return f"ConcatSchema(domain={self.domain!r}, task={self.task!r})"
