"""Informativeness scores and batch selection for pool-based querying.

All logarithms are natural. Scores only rank instances, so the base choice
fixes reported magnitudes without changing any selection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .learners import ProbDist, TrainedModel


class StrategyKind(str, enum.Enum):
    RANDOM = "random"
    LEAST_CONFIDENT = "least_confident"
    ENTROPY = "entropy"
    VOTE_ENTROPY = "vote_entropy"
    KL_DIVERGENCE = "kl_divergence"


COMMITTEE_STRATEGIES = frozenset({StrategyKind.VOTE_ENTROPY, StrategyKind.KL_DIVERGENCE})
STRATEGY_NAMES = tuple(s.value for s in StrategyKind)


@dataclass(frozen=True)
class Committee:
    """Two or more trained models over the same classes and feature space."""

    members: tuple[TrainedModel, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a committee needs at least 2 members")
        first = self.members[0]
        for member in self.members[1:]:
            if member.classes != first.classes:
                raise ValueError("committee members must share the class ordering")
            if member.vocab_size != first.vocab_size:
                raise ValueError("committee members must share the vocabulary size")

    @property
    def vocab_size(self) -> int:
        return self.members[0].vocab_size

    @property
    def classes(self) -> tuple[int, ...]:
        return self.members[0].classes


def least_confident_score(p: ProbDist) -> float:
    """1 minus the top-class probability; higher means more informative."""
    return 1.0 - max(p.probs)


def entropy_score(p: ProbDist) -> float:
    """Shannon entropy of the class distribution, with 0*ln(0) = 0."""
    arr = np.asarray(p.probs)
    nz = arr[arr > 0]
    return float(-(nz * np.log(nz)).sum())


def vote_entropy_score(votes: Sequence[int], n_classes: int) -> float:
    """Entropy of the committee's hard-vote distribution."""
    if not len(votes):
        raise ValueError("empty vote list")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    counts = np.bincount(np.asarray(votes, dtype=np.int64), minlength=n_classes)
    if counts.size > n_classes:
        raise ValueError("vote outside 0..n_classes-1")
    frac = counts / len(votes)
    nz = frac[frac > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_qbc_score(member_dists: Sequence[ProbDist]) -> float:
    """Mean KL divergence of each member from the committee's mean distribution.

    The consensus is the componentwise mean, so every zero in the mean implies
    zeros in all members and the score stays finite.
    """
    if len(member_dists) < 2:
        raise ValueError("need at least 2 member distributions")
    k = member_dists[0].n_classes
    if any(d.n_classes != k for d in member_dists):
        raise ValueError("member distributions must share the class count")
    arr = np.asarray([d.probs for d in member_dists])
    consensus = arr.mean(axis=0)
    positive = arr > 0
    terms = np.zeros_like(arr)
    terms[positive] = arr[positive] * (
        np.log(arr[positive]) - np.log(np.broadcast_to(consensus, arr.shape)[positive])
    )
    return float(terms.sum(axis=1).mean())


def member_votes(committee: Committee, X) -> np.ndarray:
    """Hard votes per member, shape (members, n); argmax ties take class 0."""
    return np.stack(
        [member.predict_proba_matrix(X).argmax(axis=1) for member in committee.members]
    )


def majority_vote(votes: np.ndarray) -> np.ndarray:
    """Per-column majority of a (members, n) vote array; ties take class 0."""
    n_classes = 2
    counts = np.stack([(votes == c).sum(axis=0) for c in range(n_classes)])
    return counts.argmax(axis=0)


def select_batch(scores: Sequence[tuple[str, float]], k: int) -> list[str]:
    """The k highest-scoring ids; ties break by ascending id."""
    if not scores:
        raise ValueError("empty score list")
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = [doc_id for doc_id, _ in scores]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate document ids in scores")
    ranked = sorted(scores, key=lambda pair: (-pair[1], pair[0]))
    return [doc_id for doc_id, _ in ranked[:k]]


def random_batch(pool_ids: Sequence[str], k: int, seed: int) -> list[str]:
    """Uniform sample of k ids without replacement, deterministic given seed.

    The pool is order-canonicalized first, so the draw depends only on the
    id set and the seed.
    """
    if k > len(pool_ids):
        raise ValueError(f"cannot sample {k} from a pool of {len(pool_ids)}")
    ordered = sorted(pool_ids)
    if len(set(ordered)) != len(ordered):
        raise ValueError("duplicate document ids in pool")
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(ordered))[:k]
    return [ordered[i] for i in picks]
