"""L2-regularized logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit


@dataclass(frozen=True)
class LRParams:
    learning_rate: float = 0.1
    n_iters: int = 500
    l2: float = 1e-4


def loss_and_grad(
    w: np.ndarray,
    b: float,
    X: sparse.csr_matrix,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus (l2/2)*||w||^2, with gradients in w and b.

    The bias is not regularized. Uses log(1+e^z) - y*z for stability.
    """
    n = X.shape[0]
    z = X @ w + b
    loss = float(np.logaddexp(0.0, z).mean() - (y * z).mean() + 0.5 * l2 * (w @ w))
    residual = expit(z) - y
    grad_w = (X.T @ residual) / n + l2 * w
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class LRModel:
    kind = "lr"
    weights: np.ndarray
    bias: float
    vocab_size: int
    classes: tuple[int, int]
    train_seed: int
    params: LRParams

    def predict_proba_matrix(self, X: sparse.csr_matrix) -> np.ndarray:
        p1 = expit(X @ self.weights + self.bias)
        return np.column_stack([1.0 - p1, p1])


def fit_lr(
    X: sparse.csr_matrix,
    y: np.ndarray,
    params: LRParams,
    seed: int,
    vocab_size: int,
) -> LRModel:
    w = np.zeros(X.shape[1], dtype=np.float64)
    b = 0.0
    for _ in range(params.n_iters):
        _, grad_w, grad_b = loss_and_grad(w, b, X, y, params.l2)
        w = w - params.learning_rate * grad_w
        b = b - params.learning_rate * grad_b
    return LRModel(
        weights=w,
        bias=b,
        vocab_size=vocab_size,
        classes=(0, 1),
        train_seed=seed,
        params=params,
    )
