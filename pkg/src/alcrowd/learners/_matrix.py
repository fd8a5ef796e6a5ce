"""Conversion from sparse feature vectors to scipy/numpy matrices."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import sparse

from ..corpus import SparseVector


def to_csr(vectors: Sequence[SparseVector], n_cols: int) -> sparse.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for vec in vectors:
        if vec.pairs and vec.pairs[-1][0] >= n_cols:
            raise ValueError(
                f"feature index {vec.pairs[-1][0]} out of range for {n_cols} columns"
            )
        for idx, weight in vec.pairs:
            indices.append(idx)
            data.append(weight)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(vectors), n_cols),
    )


def to_dense(X: sparse.csr_matrix) -> np.ndarray:
    return np.asarray(X.todense(), dtype=np.float64)
