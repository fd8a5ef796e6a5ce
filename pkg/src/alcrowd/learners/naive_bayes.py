"""Multinomial naive Bayes with Laplace smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class NBParams:
    alpha: float = 1.0


@dataclass(frozen=True)
class NBModel:
    kind = "nb"
    log_prior: np.ndarray        # (2,)
    log_theta: np.ndarray        # (2, vocab_size)
    vocab_size: int
    classes: tuple[int, int]
    train_seed: int
    params: NBParams

    def predict_proba_matrix(self, X: sparse.csr_matrix) -> np.ndarray:
        scores = X @ self.log_theta.T + self.log_prior
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        return scores


def fit_nb(
    X: sparse.csr_matrix,
    y: np.ndarray,
    params: NBParams,
    seed: int,
    vocab_size: int,
) -> NBModel:
    if params.alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    n = X.shape[0]
    d = X.shape[1]
    log_prior = np.empty(2)
    log_theta = np.empty((2, d))
    for cls in (0, 1):
        mask = y == cls
        log_prior[cls] = np.log(mask.sum() / n)
        counts = np.asarray(X[mask].sum(axis=0)).ravel()
        log_theta[cls] = np.log(counts + params.alpha) - np.log(
            counts.sum() + params.alpha * d
        )
    return NBModel(
        log_prior=log_prior,
        log_theta=log_theta,
        vocab_size=vocab_size,
        classes=(0, 1),
        train_seed=seed,
        params=params,
    )
