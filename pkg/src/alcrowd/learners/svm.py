"""Linear soft-margin SVM trained by full-batch subgradient descent.

Class probabilities come from a fixed-scale sigmoid on the signed margin;
there is no Platt refit. That keeps the output a valid distribution for
committee disagreement scores while staying deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit


@dataclass(frozen=True)
class SVMParams:
    c: float = 1.0
    n_iters: int = 500
    learning_rate: float = 0.5
    proba_scale: float = 1.0


@dataclass(frozen=True)
class SVMModel:
    kind = "svm"
    weights: np.ndarray
    bias: float
    vocab_size: int
    classes: tuple[int, int]
    train_seed: int
    params: SVMParams

    def decision_function(self, X: sparse.csr_matrix) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba_matrix(self, X: sparse.csr_matrix) -> np.ndarray:
        p1 = expit(self.params.proba_scale * self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])


def hinge_objective(
    w: np.ndarray,
    b: float,
    X: sparse.csr_matrix,
    y_signed: np.ndarray,
    lam: float,
) -> float:
    margins = y_signed * (X @ w + b)
    return float(np.maximum(0.0, 1.0 - margins).mean() + 0.5 * lam * (w @ w))


def fit_svm(
    X: sparse.csr_matrix,
    y: np.ndarray,
    params: SVMParams,
    seed: int,
    vocab_size: int,
) -> SVMModel:
    if params.c <= 0:
        raise ValueError("C must be positive")
    n = X.shape[0]
    y_signed = 2.0 * y - 1.0
    lam = 1.0 / (params.c * n)
    w = np.zeros(X.shape[1], dtype=np.float64)
    b = 0.0
    # tail-averaged iterates: plain subgradient oscillates on hinge kinks
    half = params.n_iters // 2
    w_sum = np.zeros_like(w)
    b_sum = 0.0
    averaged = 0
    for t in range(params.n_iters):
        margins = y_signed * (X @ w + b)
        violating = margins < 1.0
        coeff = np.where(violating, -y_signed, 0.0)
        grad_w = lam * w + (X.T @ coeff) / n
        grad_b = float(coeff.mean())
        eta = params.learning_rate / np.sqrt(t + 1.0)
        w = w - eta * grad_w
        b = b - eta * grad_b
        if t >= half:
            w_sum += w
            b_sum += b
            averaged += 1
    if averaged:
        w = w_sum / averaged
        b = b_sum / averaged
    return SVMModel(
        weights=w,
        bias=b,
        vocab_size=vocab_size,
        classes=(0, 1),
        train_seed=seed,
        params=params,
    )
