import numpy as np
import pytest

from twosided.data import Dataset, EncodedData
from twosided.descriptor import DescriptorSchema
from twosided.errors import DegenerateDomainError, EmptyDatasetError, ShapeError


def test_domains_sorted_with_inverse():
    ds = Dataset(np.zeros((4, 2)), np.zeros(4), [[1, 0], [0, 1], [1, 0], [0, 0]])
    keys, inv = ds.domains()
    assert keys == [(0, 0), (0, 1), (1, 0)]
    assert inv.tolist() == [2, 1, 2, 0]


def test_encode_and_subset(grid_schema):
    ds = Dataset(np.ones((3, 2)), [1.0, 2.0, 3.0], [[0, 2], [1, 0], [0, 2]])
    enc = ds.encode(grid_schema)
    assert enc.Z.shape == (3, 5) and enc.groups.tolist() == [0, 1, 0]
    sub = ds.subset([2])
    assert sub.y.tolist() == [3.0] and sub.levels.tolist() == [[0, 2]]


def test_validation():
    with pytest.raises(ShapeError):
        Dataset(np.ones((3, 2)), [1.0], [[0]] * 3)
    with pytest.raises(ValueError):
        Dataset(np.ones((1, 1)), [1.0], [[0]], "ordinal")
    with pytest.raises(EmptyDatasetError):
        Dataset(np.ones((0, 2)), [], np.zeros((0, 1))).domains()


def test_group_sizes():
    d = EncodedData(np.ones((3, 1)), np.ones((3, 1)), [1.0, 1.0, 1.0], [0, 0, 1])
    assert d.group_sizes().tolist() == [2, 1]
    empty = EncodedData(np.ones((2, 1)), np.ones((2, 1)), [1.0, 1.0], [0, 2], n_groups=3)
    with pytest.raises(DegenerateDomainError, match="1"):
        empty.group_sizes()
