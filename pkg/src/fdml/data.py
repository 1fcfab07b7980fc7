"""svmlight/libsvm ingestion and vertical (per-party) feature partitioning.

Ingestion happens once at startup; the resulting stores are immutable and
shared freely between worker threads. Labels are replicated to every party,
features are not: each party only ever sees its own column slice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from fdml.model import ConfigurationError, LocalFeatureVector


class ParseError(ValueError):
    """Malformed svmlight input; message carries the 1-based line number."""


@dataclass
class Dataset:
    """Row-aligned sparse samples with {0,1} labels."""

    matrix: csr_matrix  # n x d, 0-based column indices
    labels: np.ndarray  # float {0.0, 1.0}

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def sample(self, i: int):
        """(indices, values) of row i, indices strictly increasing."""
        row = self.matrix.getrow(i)
        order = np.argsort(row.indices)
        return row.indices[order], row.data[order]


@dataclass
class DatasetSplit:
    train: Dataset
    test: Dataset

    @property
    def n_features(self) -> int:
        return self.train.n_features


def parse_svmlight(lines, n_features: int | None = None) -> Dataset:
    """Parse 'label idx:val ...' lines with 1-based indices.

    Labels -1/+1 map to 0/1; blank lines are tolerated. Malformed tokens or
    non-increasing indices within a line raise ParseError with the line number.
    """
    labels = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = -1
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            raw = float(parts[0])
        except ValueError:
            raise ParseError(f"line {lineno}: bad label {parts[0]!r}") from None
        if raw not in (-1.0, 0.0, 1.0):
            raise ParseError(f"line {lineno}: label must be -1, 0 or +1, got {parts[0]!r}")
        labels.append(1.0 if raw == 1.0 else 0.0)
        prev = -1
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":")
                idx = int(idx_s) - 1
                val = float(val_s)
            except ValueError:
                raise ParseError(f"line {lineno}: bad feature token {tok!r}") from None
            if idx <= prev:
                raise ParseError(f"line {lineno}: feature indices must be increasing")
            if idx < 0:
                raise ParseError(f"line {lineno}: feature index must be >= 1")
            prev = idx
            indices.append(idx)
            values.append(val)
            if idx > max_index:
                max_index = idx
        indptr.append(len(indices))
    d = n_features if n_features is not None else max_index + 1
    if max_index >= d:
        raise ParseError(f"feature index {max_index + 1} exceeds declared dimension {d}")
    mat = csr_matrix(
        (np.asarray(values), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    return Dataset(matrix=mat, labels=np.asarray(labels))


def load_svmlight(path, n_features: int | None = None) -> Dataset:
    with open(path) as f:
        return parse_svmlight(f, n_features=n_features)


def load_split(train_path, test_path, n_features: int | None = None) -> DatasetSplit:
    train = load_svmlight(train_path, n_features=n_features)
    test = load_svmlight(test_path, n_features=n_features)
    if n_features is None and train.n_features != test.n_features:
        # widen the narrower side so the splits stay column-aligned
        d = max(train.n_features, test.n_features)
        if train.n_features < d:
            train = load_svmlight(train_path, n_features=d)
        else:
            test = load_svmlight(test_path, n_features=d)
    return DatasetSplit(train=train, test=test)


class VerticalPartition:
    """Assignment of global feature indices to parties.

    Slices are disjoint by default; overlap is allowed when given explicitly.
    """

    def __init__(self, n_features: int, party_indices):
        self.n_features = n_features
        self.parties = [np.asarray(ix, dtype=np.int64) for ix in party_indices]
        seen = np.zeros(n_features, dtype=bool)
        for ix in self.parties:
            if ix.size and (ix.min() < 0 or ix.max() >= n_features):
                raise ConfigurationError("partition index out of range")
            seen[ix] = True
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise ConfigurationError(f"partition leaves feature {missing} unassigned")
        # global -> (party, local) map; for overlapping partitions the last
        # party listed wins (only used by per-sample projection round-trips,
        # which require disjointness anyway)
        self._party_of = np.full(n_features, -1, dtype=np.int64)
        self._local_of = np.zeros(n_features, dtype=np.int64)
        for j, ix in enumerate(self.parties):
            self._party_of[ix] = j
            self._local_of[ix] = np.arange(ix.size)

    @property
    def n_parties(self) -> int:
        return len(self.parties)

    @classmethod
    def from_sizes(cls, n_features: int, sizes) -> "VerticalPartition":
        if sum(sizes) != n_features:
            raise ConfigurationError(
                f"partition sizes {list(sizes)} do not sum to {n_features}")
        bounds = np.cumsum([0, *sizes])
        return cls(n_features, [np.arange(a, b) for a, b in zip(bounds, bounds[1:])])

    @classmethod
    def even(cls, n_features: int, n_parties: int) -> "VerticalPartition":
        base = n_features // n_parties
        sizes = [base + (1 if j < n_features % n_parties else 0) for j in range(n_parties)]
        return cls.from_sizes(n_features, sizes)

    @classmethod
    def from_json(cls, path, n_features: int) -> "VerticalPartition":
        with open(path) as f:
            spec = json.load(f)
        if "parties" in spec:
            return cls(n_features, spec["parties"])
        if "sizes" in spec:
            return cls.from_sizes(n_features, spec["sizes"])
        raise ConfigurationError("partition file needs a 'parties' or 'sizes' key")

    def project(self, indices, values, party: int, sample_id: int = -1) -> LocalFeatureVector:
        """Restrict a sparse sample to one party's slice, in local coordinates."""
        mine = self.parties[party]
        mask = np.isin(indices, mine)
        pos = np.searchsorted(mine, indices[mask])
        return LocalFeatureVector(
            sample_id=sample_id,
            indices=pos,
            values=np.asarray(values)[mask],
            dim=mine.size,
        )

    def slice_matrix(self, matrix: csr_matrix, party: int) -> csr_matrix:
        """Column slice of a CSR store for one party, local coordinates."""
        return matrix[:, self.parties[party]].tocsr()

    def reassemble(self, locals_: list[LocalFeatureVector]):
        """Inverse of project for disjoint partitions."""
        glob_idx = []
        glob_val = []
        for j, lf in enumerate(locals_):
            glob_idx.append(self.parties[j][lf.indices])
            glob_val.append(lf.values)
        idx = np.concatenate(glob_idx) if glob_idx else np.array([], dtype=np.int64)
        val = np.concatenate(glob_val) if glob_val else np.array([])
        order = np.argsort(idx)
        return idx[order], val[order]
