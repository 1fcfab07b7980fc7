"""Small synthetic binary-classification instances for verification suites
and convergence experiments."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix

from fdml.data import Dataset, VerticalPartition
from fdml.model import sigmoid


def make_classification(n: int, d: int, seed: int = 0, density: float = 0.5) -> Dataset:
    """Linearly separable-ish sparse instance with logistic labels."""
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(n, d)) * (rng.random((n, d)) < density)
    w_true = rng.normal(size=d)
    p = sigmoid(dense @ w_true)
    labels = (rng.random(n) < p).astype(np.float64)
    return Dataset(matrix=csr_matrix(dense), labels=labels)


def two_party_instance(n: int = 200, d: int = 10, seed: int = 0):
    """Dataset plus an even two-party vertical split, as CSR column slices."""
    ds = make_classification(n, d, seed=seed)
    part = VerticalPartition.even(d, 2)
    stores = [part.slice_matrix(ds.matrix, j) for j in range(2)]
    return ds, part, stores
