import pathlib

import numpy as np
import pytest

from fdml.data import VerticalPartition, load_split
from fdml.model import FeedForward

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data" / "a9a"

A9A_FEATURES = 124
A9A_SPLIT = (67, 57)


@pytest.fixture(scope="session")
def a9a():
    """Canonical adult split, loaded once per session."""
    return load_split(DATA_DIR / "a9a", DATA_DIR / "a9a.t", n_features=A9A_FEATURES)


@pytest.fixture(scope="session")
def a9a_partition():
    return VerticalPartition.from_sizes(A9A_FEATURES, A9A_SPLIT)


@pytest.fixture(scope="session")
def a9a_lr_stores(a9a, a9a_partition):
    """Per-party CSR column slices (train, test) for the linear model."""
    train = [a9a_partition.slice_matrix(a9a.train.matrix, j) for j in range(2)]
    test = [a9a_partition.slice_matrix(a9a.test.matrix, j) for j in range(2)]
    return train, test


@pytest.fixture(scope="session")
def a9a_nn_stores(a9a_lr_stores):
    """Dense per-party stores for the feed-forward model."""
    train, test = a9a_lr_stores
    to_dense = lambda mats: [np.asarray(m.todense()) for m in mats]
    return to_dense(train), to_dense(test)
