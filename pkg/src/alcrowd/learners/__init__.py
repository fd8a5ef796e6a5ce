"""Classical text classifiers over sparse n-gram features.

Four learner kinds are supported: logistic regression ("lr"), multinomial
naive Bayes ("nb"), random forest ("rf"), and a linear SVM ("svm"). All fits
are deterministic given the training data and seed, and every trained model
exposes calibrated class probabilities for the query strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from ..corpus import SparseVector
from ._matrix import to_csr
from .forest import RFModel, RFParams, fit_rf
from .logistic import LRModel, LRParams, fit_lr
from .naive_bayes import NBModel, NBParams, fit_nb
from .svm import SVMModel, SVMParams, fit_svm

LEARNER_KINDS = ("lr", "nb", "rf", "svm")

TrainedModel = Union[LRModel, NBModel, RFModel, SVMModel]
LearnerParams = Union[LRParams, NBParams, RFParams, SVMParams]

_FITTERS = {"lr": fit_lr, "nb": fit_nb, "rf": fit_rf, "svm": fit_svm}
_DEFAULT_PARAMS = {"lr": LRParams, "nb": NBParams, "rf": RFParams, "svm": SVMParams}


@dataclass(frozen=True)
class ProbDist:
    """Per-class probability vector; components sum to 1 within 1e-9."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) < 2:
            raise ValueError("a distribution needs at least 2 classes")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(self.probs)!r}, not 1")

    @property
    def n_classes(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Metrics:
    """Positive-class precision/recall/F1 plus support-weighted F1.

    `degenerate` is set when any precision/recall/F1 cell had a zero
    denominator and was reported as 0.
    """

    precision: float
    recall: float
    f1_pos: float
    f1_weighted: float
    support: tuple[int, int]  # (negatives, positives)
    degenerate: bool = False

    def get(self, metric: str) -> float:
        if metric not in ("precision", "recall", "f1_pos", "f1_weighted"):
            raise ValueError(f"unknown metric {metric!r}")
        return getattr(self, metric)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1, degenerate


def compute_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> Metrics:
    if len(y_true) != len(y_pred):
        raise ValueError("prediction/label length mismatch")
    if not len(y_true):
        raise ValueError("empty test set")
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    tp = int(((yt == 1) & (yp == 1)).sum())
    fp = int(((yt == 0) & (yp == 1)).sum())
    fn = int(((yt == 1) & (yp == 0)).sum())
    tn = int(((yt == 0) & (yp == 0)).sum())
    precision, recall, f1_pos, degen_pos = _prf(tp, fp, fn)
    # class-0 cells mirror the positive ones with roles swapped
    _, _, f1_neg, degen_neg = _prf(tn, fn, fp)
    n_neg, n_pos = tn + fp, tp + fn
    f1_weighted = (n_neg * f1_neg + n_pos * f1_pos) / (n_neg + n_pos)
    return Metrics(
        precision=precision,
        recall=recall,
        f1_pos=f1_pos,
        f1_weighted=f1_weighted,
        support=(n_neg, n_pos),
        degenerate=degen_pos or degen_neg,
    )


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """Student-t confidence interval for the mean: (mean, lower, upper)."""
    if len(values) < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    half = float(stats.t.ppf((1 + level) / 2, n - 1)) * sd / math.sqrt(n)
    return mean, mean - half, mean + half


def fit(
    kind: str,
    train_set: Sequence[tuple[SparseVector, int]],
    vocab_size: int,
    params: Optional[LearnerParams] = None,
    seed: int = 0,
) -> TrainedModel:
    """Train one learner; identical inputs and seed give identical models."""
    if kind not in _FITTERS:
        raise ValueError(f"unknown learner kind {kind!r}; expected one of {LEARNER_KINDS}")
    if not train_set:
        raise ValueError("empty training set")
    labels = {label for _, label in train_set}
    if not labels <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, got {sorted(labels)}")
    if len(labels) < 2:
        raise ValueError("training set contains a single class")
    X = to_csr([vec for vec, _ in train_set], vocab_size)
    y = np.asarray([label for _, label in train_set], dtype=np.float64)
    if params is None:
        params = _DEFAULT_PARAMS[kind]()
    return _FITTERS[kind](X, y, params, seed, vocab_size)


def predict_proba_matrix(model: TrainedModel, X) -> np.ndarray:
    return model.predict_proba_matrix(X)


def predict_proba(model: TrainedModel, x: SparseVector) -> ProbDist:
    if x.max_index() >= model.vocab_size:
        raise ValueError(
            f"feature index {x.max_index()} out of range for vocab of {model.vocab_size}"
        )
    row = model.predict_proba_matrix(to_csr([x], model.vocab_size))[0]
    return ProbDist(probs=tuple(float(p) for p in row))


def predict_labels_matrix(model: TrainedModel, X) -> np.ndarray:
    """Hard labels; a probability tie resolves to the lowest class index."""
    return model.predict_proba_matrix(X).argmax(axis=1)


def evaluate(model: TrainedModel, test_set: Sequence[tuple[SparseVector, int]]) -> Metrics:
    if not test_set:
        raise ValueError("empty test set")
    X = to_csr([vec for vec, _ in test_set], model.vocab_size)
    y_pred = predict_labels_matrix(model, X)
    return compute_metrics([label for _, label in test_set], y_pred)
