"""Datasets of (features, descriptor levels, label) triples."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDomainError, EmptyDatasetError, ShapeError

TASK_KINDS = ("regression", "binary", "multiclass")


@dataclass
class EncodedData:
    """Numeric view of a dataset consumed by the trainer.

    ``groups[i]`` is the domain (or task) index of instance ``i``; it drives
    per-domain risk weighting.
    """

    X: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    n_groups: int | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.Z = np.ascontiguousarray(self.Z, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64).reshape(-1)
        self.groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)
        n = self.X.shape[0]
        if self.Z.shape[0] != n or self.y.shape[0] != n or self.groups.shape[0] != n:
            raise ShapeError(
                f"row counts differ: X {self.X.shape[0]}, Z {self.Z.shape[0]}, "
                f"y {self.y.shape[0]}, groups {self.groups.shape[0]}"
            )
        if self.n_groups is None:
            self.n_groups = int(self.groups.max()) + 1 if n else 0

    def __len__(self):
        return self.X.shape[0]

    def group_sizes(self):
        if len(self) == 0:
            raise DegenerateDomainError("dataset has no instances")
        sizes = np.bincount(self.groups, minlength=self.n_groups)
        empty = np.flatnonzero(sizes == 0)
        if empty.size:
            raise DegenerateDomainError(f"domain {int(empty[0])} has no instances")
        return sizes


@dataclass
class Dataset:
    """Instances with per-factor descriptor levels.

    ``levels`` has one integer column per schema factor. For multi-domain
    multi-task data the domain factors come first, then the task factors.
    """

    X: np.ndarray
    y: np.ndarray
    levels: np.ndarray
    kind: str = "regression"
    feature_names: list = field(default_factory=list)
    factor_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=np.float64)))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.levels = np.asarray(self.levels, dtype=np.int64)
        if self.levels.ndim == 1:
            self.levels = self.levels.reshape(-1, 1)
        if self.kind not in TASK_KINDS:
            raise ValueError(f"kind must be one of {TASK_KINDS}, got {self.kind!r}")
        n = self.X.shape[0]
        if self.y.shape[0] != n or self.levels.shape[0] != n:
            raise ShapeError(
                f"row counts differ: X {n}, y {self.y.shape[0]}, levels {self.levels.shape[0]}"
            )
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]

    def __len__(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx], self.y[idx], self.levels[idx], self.kind,
            list(self.feature_names), list(self.factor_names),
        )

    def domains(self):
        """Distinct level tuples (sorted) and each instance's index into them."""
        if len(self) == 0:
            raise EmptyDatasetError("dataset has no instances")
        keys, inverse = np.unique(self.levels, axis=0, return_inverse=True)
        return [tuple(int(v) for v in k) for k in keys], inverse.reshape(-1)

    def encode(self, schema, groups=None):
        """Encode descriptors under ``schema``; domains become trainer groups."""
        if groups is None:
            _, groups = self.domains()
        return EncodedData(self.X, schema.encode_many(self.levels), self.y, groups)
