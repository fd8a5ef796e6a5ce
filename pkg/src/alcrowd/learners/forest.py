"""Random forest of Gini decision trees on count features.

Split search is histogram-based: each feature column is rank-encoded once per
fit, so per-node candidate evaluation reduces to bincounts and cumulative
sums over small integer codes. Memory scales with the dense n x d feature
matrix; intended for desk-scale corpora.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from ._matrix import to_dense


@dataclass(frozen=True)
class RFParams:
    n_trees: int = 100
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_leaf: int = 1


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray    # (nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (nodes,) float64, go left when x <= threshold
    left: np.ndarray       # (nodes,) int32
    right: np.ndarray      # (nodes,) int32
    leaf_class: np.ndarray  # (nodes,) int8, -1 for internal nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feats = self.feature[node]
            active = np.nonzero(feats >= 0)[0]
            if active.size == 0:
                break
            cur = node[active]
            go_left = X[active, feats[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.leaf_class[node].astype(np.int64)


class _TreeBuilder:
    def __init__(self, ranks: np.ndarray, uniques: list[np.ndarray], y: np.ndarray,
                 params: RFParams):
        self.ranks = ranks
        self.uniques = uniques
        self.y = y
        self.params = params
        self.d = ranks.shape[1]
        self.mtry = int(np.ceil(np.sqrt(self.d)))
        self.max_ranks = max(len(u) for u in uniques)

    def build(self, rng: np.random.Generator) -> _Tree:
        n = self.ranks.shape[0]
        if self.params.bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        leaf_class: list[int] = []

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_class.append(-1)
            return len(feature) - 1

        stack = [(new_node(), idx, 0)]
        while stack:
            nid, ids, depth = stack.pop()
            ys = self.y[ids]
            n_i = ids.size
            pos = int(ys.sum())
            at_depth_cap = (
                self.params.max_depth is not None and depth >= self.params.max_depth
            )
            if pos == 0 or pos == n_i or n_i < 2 * self.params.min_leaf or at_depth_cap:
                leaf_class[nid] = int(2 * pos > n_i)
                continue
            split = self._best_split(ids, ys, n_i, pos, rng)
            if split is None:
                leaf_class[nid] = int(2 * pos > n_i)
                continue
            feat, thr_rank = split
            mask = self.ranks[ids, feat] <= thr_rank
            u = self.uniques[feat]
            feature[nid] = feat
            threshold[nid] = float((u[thr_rank] + u[thr_rank + 1]) / 2.0)
            left_id, right_id = new_node(), new_node()
            left[nid], right[nid] = left_id, right_id
            stack.append((right_id, ids[~mask], depth + 1))
            stack.append((left_id, ids[mask], depth + 1))
        return _Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            leaf_class=np.asarray(leaf_class, dtype=np.int8),
        )

    def _best_split(self, ids, ys, n_i, pos, rng) -> Optional[tuple[int, int]]:
        """Best (feature, rank threshold) over ceil(sqrt(d)) sampled features.

        When none of the sampled features yields an impurity decrease, keep
        scanning the remaining features in permuted order, so an impure node
        with any separating feature is always split.
        """
        order = rng.permutation(self.d)
        parent = 2.0 * pos * (n_i - pos) / n_i
        min_leaf = self.params.min_leaf
        pos_rows = ys.astype(bool)
        K = self.max_ranks
        if K < 2:
            return None
        for start in range(0, self.d, self.mtry):
            feats = order[start : start + self.mtry]
            sub = self.ranks[ids[:, None], feats].astype(np.int64)
            m = feats.size
            flat = sub + np.arange(m) * K
            cnt_all = np.bincount(flat.ravel(), minlength=m * K).reshape(m, K)
            cnt_pos = np.bincount(flat[pos_rows].ravel(), minlength=m * K).reshape(m, K)
            left_n = np.cumsum(cnt_all, axis=1)[:, :-1].astype(np.float64)
            left_pos = np.cumsum(cnt_pos, axis=1)[:, :-1].astype(np.float64)
            right_n = n_i - left_n
            right_pos = pos - left_pos
            valid = (left_n >= min_leaf) & (right_n >= min_leaf)
            with np.errstate(divide="ignore", invalid="ignore"):
                score = (
                    2.0 * left_pos * (left_n - left_pos) / left_n
                    + 2.0 * right_pos * (right_n - right_pos) / right_n
                )
            score[~valid] = np.inf
            best = int(np.argmin(score))
            bi, bv = divmod(best, K - 1)
            if score[bi, bv] < parent - 1e-12:
                return int(feats[bi]), bv
        return None


@dataclass(frozen=True)
class RFModel:
    kind = "rf"
    trees: tuple[_Tree, ...]
    vocab_size: int
    classes: tuple[int, int]
    train_seed: int
    params: RFParams

    def predict_proba_matrix(self, X: sparse.csr_matrix) -> np.ndarray:
        Xd = to_dense(X)
        votes = np.zeros(Xd.shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(Xd)
        p1 = votes / len(self.trees)
        return np.column_stack([1.0 - p1, p1])


def fit_rf(
    X: sparse.csr_matrix,
    y: np.ndarray,
    params: RFParams,
    seed: int,
    vocab_size: int,
) -> RFModel:
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if params.min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    Xd = to_dense(X)
    n, d = Xd.shape
    ranks = np.empty((n, d), dtype=np.int32)
    uniques: list[np.ndarray] = []
    for j in range(d):
        u, inv = np.unique(Xd[:, j], return_inverse=True)
        ranks[:, j] = inv
        uniques.append(u)
    builder = _TreeBuilder(ranks, uniques, y.astype(np.int64), params)
    streams = np.random.SeedSequence(seed).spawn(params.n_trees)
    trees = tuple(builder.build(np.random.default_rng(s)) for s in streams)
    return RFModel(
        trees=trees,
        vocab_size=vocab_size,
        classes=(0, 1),
        train_seed=seed,
        params=params,
    )
