"""Pool-based active-learning experiment harness.

Runs the retrain-select loop over (strategy x learner x repeat) cells,
replaying gold labels as the annotation step, and aggregates learning curves
with confidence intervals. Every random draw derives from the master seed
and the cell coordinates, so results are independent of scheduling.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np

from ._io import DatasetError, atomic_write
from .corpus import Document, SparseVector, Vocabulary, build_vocab, normalize_documents, vectorize
from .learners import (
    LEARNER_KINDS,
    Metrics,
    ProbDist,
    TrainedModel,
    compute_metrics,
    fit,
    mean_ci,
    predict_labels_matrix,
)
from .learners._matrix import to_csr
from .strategies import (
    COMMITTEE_STRATEGIES,
    Committee,
    StrategyKind,
    entropy_score,
    kl_qbc_score,
    least_confident_score,
    majority_vote,
    member_votes,
    random_batch,
    select_batch,
    vote_entropy_score,
)

THREADS_ENV_VAR = "ALCROWD_THREADS"

# spawn-key roles for deriving independent RNG streams from the master seed
_ROLE_SPLIT = 0
_ROLE_SEEDSET = 1
_ROLE_TRAIN = 2
_ROLE_BATCH = 3

CURVE_COLUMNS = (
    "strategy",
    "learner",
    "repeat",
    "iteration",
    "labels_used",
    "precision",
    "recall",
    "f1_pos",
    "f1_weighted",
)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[str] = None
    train_size: int = 2000
    test_size: int = 1000
    seed_size: int = 300
    batch_size: int = 300
    strategies: tuple[str, ...] = ("random", "least_confident", "entropy")
    learners: tuple[str, ...] = ("lr", "rf")
    repeats: int = 10
    master_seed: Optional[int] = None
    metric: str = "f1_pos"
    resplit: bool = True
    ngram_min: int = 1
    ngram_max: int = 2
    min_df: int = 2

    def __post_init__(self):
        if self.train_size < 1 or self.test_size < 1:
            raise ValueError("train_size and test_size must be >= 1")
        if not 1 <= self.seed_size <= self.train_size:
            raise ValueError("seed_size must be in 1..train_size")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.metric not in ("precision", "recall", "f1_pos", "f1_weighted"):
            raise ValueError(f"unknown metric {self.metric!r}")
        for name in self.strategies:
            StrategyKind(name)
        for spec in self.learners:
            parse_learner_spec(spec)
        if self.master_seed is not None and self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a JSON object whose keys mirror the field names."""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    kwargs = dict(data)
    for key in ("strategies", "learners"):
        if key in kwargs:
            value = kwargs[key]
            if not isinstance(value, (list, tuple)) or not value:
                raise ValueError(f"config {key!r} must be a non-empty list")
            kwargs[key] = tuple(value)
    return ExperimentConfig(**kwargs)


def config_to_dict(config: ExperimentConfig) -> dict:
    payload = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        payload[f.name] = list(value) if isinstance(value, tuple) else value
    return payload


@dataclass(frozen=True)
class CurvePoint:
    strategy: str
    learner: str
    repeat: int
    iteration: int
    labels_used: int
    metrics: Metrics


@dataclass(frozen=True)
class LearningCurve:
    cells: tuple[CurvePoint, ...]


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings for a separable-by-construction labeled corpus.

    Documents draw `tokens_per_doc` tokens; each slot is a class-indicative
    token of the document's class with probability `signal`, otherwise a
    background token. The recorded label flips with probability `noise`.
    """

    n_docs: int
    class_tokens: int = 30
    background_tokens: int = 50
    balance: float = 0.5
    signal: float = 0.9
    noise: float = 0.02
    tokens_per_doc: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.n_docs < 1:
            raise ValueError("n_docs must be >= 1")
        if self.class_tokens < 1:
            raise ValueError("need at least 1 class-indicative token per class")
        if self.background_tokens < 0:
            raise ValueError("background_tokens must be >= 0")
        if self.background_tokens == 0 and self.signal < 1.0:
            raise ValueError("background_tokens must be >= 1 when signal < 1")
        for name in ("balance", "signal", "noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.tokens_per_doc < 1:
            raise ValueError("tokens_per_doc must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def generate_synthetic_corpus(spec: SynthSpec) -> list[Document]:
    """Deterministic labeled corpus in the standard dataset schema."""
    rng = np.random.default_rng(spec.seed)
    n, length = spec.n_docs, spec.tokens_per_doc
    true_class = (rng.random(n) < spec.balance).astype(np.int64)
    is_signal = rng.random((n, length)) < spec.signal
    class_pick = rng.integers(0, spec.class_tokens, size=(n, length))
    bg_pick = rng.integers(0, max(spec.background_tokens, 1), size=(n, length))
    flips = rng.random(n) < spec.noise
    docs = []
    for i in range(n):
        tokens = [
            f"c{true_class[i]}t{class_pick[i, j]:03d}"
            if is_signal[i, j]
            else f"bgt{bg_pick[i, j]:03d}"
            for j in range(length)
        ]
        text = " ".join(tokens)
        docs.append(
            Document(
                id=f"synth-{i:06d}",
                raw_text=text,
                norm_text=text,
                label=int(true_class[i] ^ flips[i]),
                lang="en",
                source="synth",
            )
        )
    return docs


def split_dataset(
    docs: Sequence[Document], train_size: int, test_size: int, seed: int
) -> tuple[list[Document], list[Document], list[Document]]:
    """Disjoint uniform-random (train pool, test set, remainder) split."""
    if train_size < 0 or test_size < 0:
        raise ValueError("split sizes must be non-negative")
    if train_size + test_size > len(docs):
        raise ValueError(
            f"cannot split {len(docs)} docs into train {train_size} + test {test_size}"
        )
    unlabeled = [d.id for d in docs if d.label is None]
    if unlabeled:
        raise ValueError(f"unlabeled documents in split input: {unlabeled[:5]}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(docs))
    train = [docs[i] for i in perm[:train_size]]
    test = [docs[i] for i in perm[train_size : train_size + test_size]]
    remainder = [docs[i] for i in perm[train_size + test_size :]]
    return train, test, remainder


def parse_learner_spec(spec: str) -> tuple[str, ...]:
    """A learner spec is a single kind or `committee:<kind>+<kind>+...`."""
    if spec in LEARNER_KINDS:
        return (spec,)
    if spec.startswith("committee:"):
        members = tuple(spec[len("committee:") :].split("+"))
        if len(members) < 2:
            raise ValueError(f"committee spec {spec!r} needs at least 2 members")
        for member in members:
            if member not in LEARNER_KINDS:
                raise ValueError(f"unknown committee member {member!r} in {spec!r}")
        return members
    raise ValueError(
        f"unknown learner spec {spec!r}; expected one of {LEARNER_KINDS} "
        "or committee:<kind>+<kind>+..."
    )


def is_committee_spec(spec: str) -> bool:
    return spec.startswith("committee:")


def plan_cells(
    strategies: Sequence[str], learners: Sequence[str]
) -> list[tuple[str, str]]:
    """Arity-compatible (strategy, learner) pairs.

    Query-by-committee strategies pair only with committees, the rest only
    with single models. A strategy or learner left without any partner is a
    configuration error, reported before any training starts.
    """
    pairs = []
    matched_strategies: set[str] = set()
    matched_learners: set[str] = set()
    for strategy in strategies:
        kind = StrategyKind(strategy)
        for learner in learners:
            if (kind in COMMITTEE_STRATEGIES) == is_committee_spec(learner):
                pairs.append((strategy, learner))
                matched_strategies.add(strategy)
                matched_learners.add(learner)
    unmatched = sorted(set(strategies) - matched_strategies)
    if unmatched:
        raise ValueError(
            f"strategies {unmatched} have no arity-compatible learner: "
            "query-by-committee strategies need a committee, others a single model"
        )
    unused = sorted(set(learners) - matched_learners)
    if unused:
        raise ValueError(f"learners {unused} have no arity-compatible strategy")
    return pairs


def _derive_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1)[0])


@dataclass(frozen=True)
class _RepeatData:
    repeat: int
    vocab: Vocabulary
    vectors: dict[str, SparseVector]
    labels: dict[str, int]
    universe_ids: tuple[str, ...]  # train pool, sorted
    seed_ids: tuple[str, ...]      # initial labeled set, sorted
    X_test: object
    y_test: np.ndarray


def _prepare_repeat(config: ExperimentConfig, docs: Sequence[Document], repeat: int) -> _RepeatData:
    master = config.master_seed
    if master is None:
        raise ValueError("master_seed is required to run an experiment")
    split_repeat = repeat if config.resplit else 0
    train, test, _ = split_dataset(
        docs, config.train_size, config.test_size, _derive_seed(master, _ROLE_SPLIT, split_repeat)
    )
    vocab = build_vocab(train, config.ngram_min, config.ngram_max, config.min_df)
    vectors = {d.id: vectorize(d, vocab) for d in train}
    labels = {d.id: d.label for d in train}
    universe_ids = tuple(sorted(vectors))
    seed_rng = np.random.default_rng(
        np.random.SeedSequence(master, spawn_key=(_ROLE_SEEDSET, split_repeat))
    )
    picks = seed_rng.permutation(len(universe_ids))[: config.seed_size]
    seed_ids = tuple(sorted(universe_ids[i] for i in picks))
    test_vectors = [vectorize(d, vocab) for d in test]
    return _RepeatData(
        repeat=repeat,
        vocab=vocab,
        vectors=vectors,
        labels=labels,
        universe_ids=universe_ids,
        seed_ids=seed_ids,
        X_test=to_csr(test_vectors, len(vocab)),
        y_test=np.asarray([d.label for d in test], dtype=np.int64),
    )


Predictor = Union[TrainedModel, Committee]


def _fit_predictor(
    config: ExperimentConfig,
    prep: _RepeatData,
    learner_spec: str,
    learner_idx: int,
    labeled_ids: Sequence[str],
) -> Predictor:
    # canonical id order makes the fit a function of the label *set*
    train_set = [(prep.vectors[i], prep.labels[i]) for i in sorted(labeled_ids)]
    members = parse_learner_spec(learner_spec)
    models = [
        fit(
            kind,
            train_set,
            vocab_size=len(prep.vocab),
            seed=_derive_seed(config.master_seed, _ROLE_TRAIN, learner_idx, prep.repeat, m),
        )
        for m, kind in enumerate(members)
    ]
    if is_committee_spec(learner_spec):
        return Committee(members=tuple(models))
    return models[0]


def _predict_test(predictor: Predictor, prep: _RepeatData) -> np.ndarray:
    if isinstance(predictor, Committee):
        return majority_vote(member_votes(predictor, prep.X_test))
    return predict_labels_matrix(predictor, prep.X_test)


def _score_pool(
    strategy: StrategyKind,
    predictor: Predictor,
    prep: _RepeatData,
    pool_ids: Sequence[str],
) -> list[tuple[str, float]]:
    X_pool = to_csr([prep.vectors[i] for i in pool_ids], len(prep.vocab))
    if strategy in COMMITTEE_STRATEGIES:
        assert isinstance(predictor, Committee)
        if strategy is StrategyKind.VOTE_ENTROPY:
            votes = member_votes(predictor, X_pool)
            k = len(predictor.classes)
            return [
                (doc_id, vote_entropy_score(votes[:, j], k))
                for j, doc_id in enumerate(pool_ids)
            ]
        member_probs = [m.predict_proba_matrix(X_pool) for m in predictor.members]
        return [
            (
                doc_id,
                kl_qbc_score([ProbDist(tuple(float(p) for p in probs[j])) for probs in member_probs]),
            )
            for j, doc_id in enumerate(pool_ids)
        ]
    probs = predictor.predict_proba_matrix(X_pool)
    score_fn = entropy_score if strategy is StrategyKind.ENTROPY else least_confident_score
    return [
        (doc_id, score_fn(ProbDist(tuple(float(p) for p in probs[j]))))
        for j, doc_id in enumerate(pool_ids)
    ]


def run_active_learning(
    config: ExperimentConfig,
    docs: Sequence[Document],
    strategy: str,
    learner_spec: str,
    repeat: int,
    _prep: Optional[_RepeatData] = None,
    _indices: Optional[tuple[int, int]] = None,
) -> list[CurvePoint]:
    """One (strategy, learner, repeat) cell of the retrain-select loop.

    Emits a point per iteration, starting from the seed-only model, until the
    pool is exhausted; the final partial batch is allowed.
    """
    kind = StrategyKind(strategy)
    if (kind in COMMITTEE_STRATEGIES) != is_committee_spec(learner_spec):
        raise ValueError(
            f"strategy {strategy!r} and learner {learner_spec!r} have incompatible arity"
        )
    prep = _prep if _prep is not None else _prepare_repeat(config, normalize_documents(docs), repeat)
    strategy_idx, learner_idx = _indices if _indices is not None else (
        list(config.strategies).index(strategy) if strategy in config.strategies else 0,
        list(config.learners).index(learner_spec) if learner_spec in config.learners else 0,
    )
    labeled = list(prep.seed_ids)
    in_labeled = set(labeled)
    pool = [i for i in prep.universe_ids if i not in in_labeled]
    points = []
    iteration = 0
    while True:
        predictor = _fit_predictor(config, prep, learner_spec, learner_idx, labeled)
        metrics = compute_metrics(prep.y_test, _predict_test(predictor, prep))
        points.append(
            CurvePoint(
                strategy=strategy,
                learner=learner_spec,
                repeat=repeat,
                iteration=iteration,
                labels_used=len(labeled),
                metrics=metrics,
            )
        )
        if not pool:
            return points
        k = min(config.batch_size, len(pool))
        if kind is StrategyKind.RANDOM:
            batch = random_batch(
                pool,
                k,
                seed=_derive_seed(
                    config.master_seed, _ROLE_BATCH, strategy_idx, learner_idx, repeat, iteration
                ),
            )
        else:
            batch = select_batch(_score_pool(kind, predictor, prep, pool), k)
        taken = set(batch)
        labeled = sorted(labeled + batch)
        pool = [i for i in pool if i not in taken]
        iteration += 1


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    curve: LearningCurve
    summary: dict


def resolve_thread_count(requested: Optional[int] = None) -> int:
    """Worker threads for cell execution; 0 means one per CPU."""
    if requested is None:
        raw = os.environ.get(THREADS_ENV_VAR, "1")
        try:
            requested = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
    if requested < 0:
        raise ValueError("thread count must be >= 0")
    if requested == 0:
        return os.cpu_count() or 1
    return requested


def run_experiment(
    config: ExperimentConfig,
    docs: Sequence[Document],
    threads: Optional[int] = None,
    target_fraction: float = 0.95,
) -> ExperimentResult:
    """All (strategy x learner x repeat) cells plus the aggregate summary."""
    if config.master_seed is None:
        raise ValueError("master_seed is required")
    pairs = plan_cells(config.strategies, config.learners)
    docs = normalize_documents(docs)
    n_threads = resolve_thread_count(threads)

    preps = {r: _prepare_repeat(config, docs, r) for r in range(config.repeats)}
    cells = [
        (strategy, learner, repeat)
        for strategy, learner in pairs
        for repeat in range(config.repeats)
    ]

    def run_cell(cell: tuple[str, str, int]) -> list[CurvePoint]:
        strategy, learner, repeat = cell
        indices = (
            list(config.strategies).index(strategy),
            list(config.learners).index(learner),
        )
        try:
            return run_active_learning(
                config, docs, strategy, learner, repeat,
                _prep=preps[repeat], _indices=indices,
            )
        except Exception as exc:
            raise RuntimeError(
                f"cell strategy={strategy} learner={learner} repeat={repeat} failed: {exc}"
            ) from exc

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    points = tuple(point for cell_points in results for point in cell_points)
    curve = LearningCurve(cells=points)
    summary = summarize_strategies(curve, target_fraction=target_fraction, metric=config.metric)
    return ExperimentResult(config=config, curve=curve, summary=summary)


def run_benchmark(config: ExperimentConfig, docs: Sequence[Document]) -> dict:
    """Fully-supervised benchmark of single learners over repeated splits.

    Trains each learner on the whole train split and reports per-learner mean
    precision/recall/F1 with a 95% CI on the configured metric.
    """
    if config.master_seed is None:
        raise ValueError("master_seed is required")
    committees = [spec for spec in config.learners if is_committee_spec(spec)]
    if committees:
        raise ValueError(f"benchmark expects single learners, got {committees}")
    docs = normalize_documents(docs)
    per_learner: dict[str, list[Metrics]] = {spec: [] for spec in config.learners}
    for repeat in range(config.repeats):
        split_repeat = repeat if config.resplit else 0
        train, test, _ = split_dataset(
            docs,
            config.train_size,
            config.test_size,
            _derive_seed(config.master_seed, _ROLE_SPLIT, split_repeat),
        )
        vocab = build_vocab(train, config.ngram_min, config.ngram_max, config.min_df)
        train_set = [(vectorize(d, vocab), d.label) for d in sorted(train, key=lambda d: d.id)]
        X_test = to_csr([vectorize(d, vocab) for d in test], len(vocab))
        y_test = [d.label for d in test]
        for learner_idx, kind in enumerate(config.learners):
            model = fit(
                kind,
                train_set,
                vocab_size=len(vocab),
                seed=_derive_seed(config.master_seed, _ROLE_TRAIN, learner_idx, repeat, 0),
            )
            per_learner[kind].append(compute_metrics(y_test, predict_labels_matrix(model, X_test)))
    rows = []
    for kind in config.learners:
        metrics = per_learner[kind]
        values = [m.get(config.metric) for m in metrics]
        if len(values) >= 2:
            _, ci_low, ci_high = mean_ci(values)
            degenerate_ci = False
        else:
            ci_low = ci_high = values[0]
            degenerate_ci = True
        rows.append(
            {
                "learner": kind,
                "precision": float(np.mean([m.precision for m in metrics])),
                "recall": float(np.mean([m.recall for m in metrics])),
                "f1_pos": float(np.mean([m.f1_pos for m in metrics])),
                "f1_weighted": float(np.mean([m.f1_weighted for m in metrics])),
                "ci_low": ci_low,
                "ci_high": ci_high,
                "degenerate_ci": degenerate_ci,
                "per_repeat": {str(i): m.get(config.metric) for i, m in enumerate(metrics)},
            }
        )
    return {"metric": config.metric, "repeats": config.repeats, "learners": rows}


def labels_to_target(
    series: Sequence[tuple[int, float]], target: float
) -> Optional[int]:
    """Smallest labels_used whose value reaches the target, else None."""
    for labels_used, value in series:
        if value >= target:
            return labels_used
    return None


def summarize_strategies(
    curve: LearningCurve, target_fraction: float = 0.95, metric: str = "f1_pos"
) -> dict:
    """Per (strategy, learner): mean curve with CI, labels-to-target, and AUC.

    The target is `target_fraction` times the mean metric at pool exhaustion;
    per-repeat labels-to-target uses each repeat's own final value.
    """
    if target_fraction <= 0:
        raise ValueError("target_fraction must be positive")
    groups: dict[tuple[str, str], dict[int, list[CurvePoint]]] = {}
    for point in curve.cells:
        by_repeat = groups.setdefault((point.strategy, point.learner), {})
        by_repeat.setdefault(point.repeat, []).append(point)

    entries = []
    for (strategy, learner), by_repeat in groups.items():
        series = {
            repeat: sorted(points, key=lambda p: p.iteration)
            for repeat, points in by_repeat.items()
        }
        schedules = {tuple(p.labels_used for p in pts) for pts in series.values()}
        if len(schedules) != 1:
            raise ValueError(
                f"{strategy}/{learner}: repeats disagree on the labels_used schedule"
            )
        schedule = schedules.pop()
        repeats = sorted(series)
        mean_curve = []
        means = []
        for idx, labels_used in enumerate(schedule):
            values = [series[r][idx].metrics.get(metric) for r in repeats]
            if len(values) >= 2:
                mean, low, high = mean_ci(values)
                degenerate_ci = False
            else:
                mean = low = high = values[0]
                degenerate_ci = True
            means.append(mean)
            mean_curve.append(
                {
                    "iteration": idx,
                    "labels_used": labels_used,
                    "mean": mean,
                    "ci_low": low,
                    "ci_high": high,
                    "degenerate_ci": degenerate_ci,
                }
            )
        full_value = means[-1]
        target = target_fraction * full_value
        ltt = labels_to_target(list(zip(schedule, means)), target)
        per_repeat_ltt = {}
        for repeat in repeats:
            values = [p.metrics.get(metric) for p in series[repeat]]
            repeat_target = target_fraction * values[-1]
            per_repeat_ltt[str(repeat)] = labels_to_target(
                list(zip(schedule, values)), repeat_target
            )
        auc = float(np.trapezoid(means, schedule))
        entries.append(
            {
                "strategy": strategy,
                "learner": learner,
                "mean_curve": mean_curve,
                "full_pool_value": full_value,
                "target": target,
                "labels_to_target": ltt,
                "target_reached": ltt is not None,
                "labels_to_target_per_repeat": per_repeat_ltt,
                "auc": auc,
            }
        )
    return {
        "metric": metric,
        "target_fraction": target_fraction,
        "strategies": entries,
    }


def write_curve_csv(path, curve: LearningCurve) -> None:
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for p in curve.cells:
            writer.writerow(
                [
                    p.strategy,
                    p.learner,
                    p.repeat,
                    p.iteration,
                    p.labels_used,
                    p.metrics.precision,
                    p.metrics.recall,
                    p.metrics.f1_pos,
                    p.metrics.f1_weighted,
                ]
            )


def read_curve_csv(path) -> LearningCurve:
    """Parse a learning-curve CSV; support counts are not serialized."""
    points = []
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DatasetError(path, None, f"cannot open: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != list(CURVE_COLUMNS):
            raise DatasetError(path, 1, f"expected header {','.join(CURVE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CURVE_COLUMNS):
                raise DatasetError(path, lineno, f"expected {len(CURVE_COLUMNS)} columns")
            try:
                metrics = Metrics(
                    precision=float(row[5]),
                    recall=float(row[6]),
                    f1_pos=float(row[7]),
                    f1_weighted=float(row[8]),
                    support=(0, 0),
                )
                points.append(
                    CurvePoint(
                        strategy=row[0],
                        learner=row[1],
                        repeat=int(row[2]),
                        iteration=int(row[3]),
                        labels_used=int(row[4]),
                        metrics=metrics,
                    )
                )
            except ValueError as exc:
                raise DatasetError(path, lineno, str(exc)) from exc
    return LearningCurve(cells=tuple(points))
