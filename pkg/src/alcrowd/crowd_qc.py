"""Crowd-annotation validation, consensus labels, and agreement statistics."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ._io import DatasetError, iter_jsonl
from .learners import mean_ci

ITEMS_PER_ASSIGNMENT = 12
CONTROLS_PER_ASSIGNMENT = 2
DEFAULT_MIN_DURATION_S = 47.0
DEFAULT_SWEEP_CUTOFFS = tuple(float(c) for c in range(0, 310, 10))


class Verdict(str, enum.Enum):
    OK = "OK"
    TOO_FAST = "TOO_FAST"
    CONTROL_FAILED = "CONTROL_FAILED"
    BOTH = "BOTH"

    @property
    def valid(self) -> bool:
        return self is Verdict.OK


class SweepDirection(str, enum.Enum):
    LOWER = "LOWER"
    UPPER = "UPPER"


@dataclass(frozen=True)
class AssignmentSpec:
    """A 12-item annotation assignment with 2 hidden control items."""

    assignment_id: str
    item_ids: tuple[str, ...]
    control_items: Mapping[str, int]

    def __post_init__(self):
        if len(self.item_ids) != ITEMS_PER_ASSIGNMENT:
            raise ValueError(
                f"assignment {self.assignment_id!r}: expected "
                f"{ITEMS_PER_ASSIGNMENT} items, got {len(self.item_ids)}"
            )
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError(f"assignment {self.assignment_id!r}: repeated item ids")
        if len(self.control_items) != CONTROLS_PER_ASSIGNMENT:
            raise ValueError(
                f"assignment {self.assignment_id!r}: expected "
                f"{CONTROLS_PER_ASSIGNMENT} control items, got {len(self.control_items)}"
            )
        if not set(self.control_items) <= set(self.item_ids):
            raise ValueError(
                f"assignment {self.assignment_id!r}: control ids not among item ids"
            )
        for item, answer in self.control_items.items():
            if answer not in (0, 1):
                raise ValueError(
                    f"assignment {self.assignment_id!r}: control answer for "
                    f"{item!r} must be 0 or 1"
                )


@dataclass(frozen=True)
class WorkerResponse:
    """One worker's pass over an assignment."""

    assignment_id: str
    worker_id: str
    duration_s: float
    answers: Mapping[str, int]

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError(f"negative duration for worker {self.worker_id!r}")
        for item, answer in self.answers.items():
            if answer not in (0, 1):
                raise ValueError(
                    f"worker {self.worker_id!r}: answer for {item!r} must be 0 or 1"
                )


@dataclass(frozen=True)
class ValidationPolicy:
    min_duration_s: float = DEFAULT_MIN_DURATION_S
    require_controls: bool = True

    def __post_init__(self):
        if self.min_duration_s < 0:
            raise ValueError("min_duration_s must be >= 0")


def validate_response(
    resp: WorkerResponse,
    spec: AssignmentSpec,
    policy: ValidationPolicy = ValidationPolicy(),
) -> Verdict:
    """Valid iff duration meets the floor and both control answers match."""
    if resp.assignment_id != spec.assignment_id:
        raise ValueError(
            f"response assignment {resp.assignment_id!r} does not match "
            f"spec {spec.assignment_id!r}"
        )
    if set(resp.answers) != set(spec.item_ids):
        raise ValueError(
            f"worker {resp.worker_id!r}: answers do not cover assignment "
            f"{spec.assignment_id!r} exactly"
        )
    too_fast = resp.duration_s < policy.min_duration_s
    control_failed = policy.require_controls and any(
        resp.answers[item] != expected for item, expected in spec.control_items.items()
    )
    if too_fast and control_failed:
        return Verdict.BOTH
    if too_fast:
        return Verdict.TOO_FAST
    if control_failed:
        return Verdict.CONTROL_FAILED
    return Verdict.OK


def consensus_label(answers: Sequence[int]) -> Optional[int]:
    """Strict-majority label; an exact tie returns None (unresolved)."""
    if not len(answers):
        raise ValueError("no answers to aggregate")
    ones = 0
    for answer in answers:
        if answer not in (0, 1):
            raise ValueError(f"answers must be 0 or 1, got {answer!r}")
        ones += answer
    zeros = len(answers) - ones
    if ones > zeros:
        return 1
    if zeros > ones:
        return 0
    return None


def cohen_kappa(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement between two raters over the same items."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not len(a):
        raise ValueError("empty label sequences")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    p_e = sum(counts_a[c] * counts_b[c] for c in counts_a) / (n * n)
    if p_e == 1.0:
        # both raters constant on the same category; agreement is perfect
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class RatingMatrix:
    """Per-item category counts with a constant number of raters per item."""

    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("empty rating matrix")
        width = len(self.rows[0])
        if width < 2:
            raise ValueError("need at least 2 categories")
        n = sum(self.rows[0])
        for row in self.rows:
            if len(row) != width:
                raise ValueError("ragged rating matrix")
            if any(c < 0 for c in row):
                raise ValueError("negative rating count")
            if sum(row) != n:
                raise ValueError("rows must have a constant rater count")
        if n < 2:
            raise ValueError("need at least 2 raters per item")

    @property
    def n_categories(self) -> int:
        return len(self.rows[0])

    @property
    def raters_per_item(self) -> int:
        return sum(self.rows[0])

    @classmethod
    def from_labels(
        cls, labels_per_item: Sequence[Sequence[int]], n_categories: int
    ) -> "RatingMatrix":
        rows = []
        for labels in labels_per_item:
            counts = [0] * n_categories
            for label in labels:
                counts[label] += 1
            rows.append(tuple(counts))
        return cls(rows=tuple(rows))


def fleiss_kappa(m: RatingMatrix) -> float:
    """Multi-rater chance-corrected agreement over the rating matrix."""
    if len(m.rows) < 2:
        raise ValueError("need at least 2 items")
    table = np.asarray(m.rows, dtype=np.float64)
    n = m.raters_per_item
    per_item = ((table * table).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(per_item.mean())
    proportions = table.sum(axis=0) / table.sum()
    p_e = float((proportions * proportions).sum())
    if p_e == 1.0:
        # a single category everywhere means every item is unanimous
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class SweepPoint:
    cutoff_s: float
    direction: SweepDirection
    n_retained: int
    mean_kappa: Optional[float]


def _worker_kappas(
    responses: Sequence[WorkerResponse], gold: Mapping[str, int]
) -> dict[str, float]:
    """Cohen's kappa per worker against gold, over gold-covered items."""
    answered: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    for resp in responses:
        worker_seq, gold_seq = answered[resp.worker_id]
        for item, answer in sorted(resp.answers.items()):
            if item in gold:
                worker_seq.append(answer)
                gold_seq.append(gold[item])
    return {
        worker_id: cohen_kappa(worker_seq, gold_seq)
        for worker_id, (worker_seq, gold_seq) in sorted(answered.items())
        if worker_seq
    }


def cutoff_sweep(
    responses: Sequence[WorkerResponse],
    gold: Mapping[str, int],
    cutoffs: Sequence[float],
    direction: SweepDirection,
) -> list[SweepPoint]:
    """Mean per-worker kappa against gold under duration cutoffs.

    LOWER keeps responses at or above the cutoff, UPPER at or below. Control
    screening is the caller's concern; duration is the swept variable here.
    An empty retention reports a missing kappa.
    """
    if not cutoffs:
        raise ValueError("empty cutoff list")
    points = []
    for cutoff in cutoffs:
        if direction is SweepDirection.LOWER:
            kept = [r for r in responses if r.duration_s >= cutoff]
        else:
            kept = [r for r in responses if r.duration_s <= cutoff]
        kappas = _worker_kappas(kept, gold)
        mean_kappa = sum(kappas.values()) / len(kappas) if kappas else None
        points.append(
            SweepPoint(
                cutoff_s=float(cutoff),
                direction=direction,
                n_retained=len(kept),
                mean_kappa=mean_kappa,
            )
        )
    return points


def worker_subset_reliability(
    answers_per_item: Mapping[str, Sequence[int]],
    k: int,
    trials: int,
    seed: int,
) -> tuple[float, float, float]:
    """Mean Fleiss' kappa and 95% CI over random k-rater subsets per item.

    Each trial draws its RNG stream from (seed, trial), so results do not
    depend on execution order.
    """
    if k < 2:
        raise ValueError("need k >= 2 raters")
    if trials < 1:
        raise ValueError("need at least 1 trial")
    if len(answers_per_item) < 2:
        raise ValueError("need at least 2 items")
    items = sorted(answers_per_item)
    for item in items:
        if len(answers_per_item[item]) < k:
            raise ValueError(
                f"item {item!r} has {len(answers_per_item[item])} responses, need {k}"
            )
    kappas = []
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        rows = []
        for item in items:
            answers = answers_per_item[item]
            picks = rng.permutation(len(answers))[:k]
            ones = int(sum(answers[i] for i in picks))
            rows.append((k - ones, ones))
        kappas.append(fleiss_kappa(RatingMatrix(rows=tuple(rows))))
    if len(kappas) == 1:
        return kappas[0], kappas[0], kappas[0]
    return mean_ci(kappas)


def resolve_gold(
    consensus: Mapping[str, Optional[int]], expert: Mapping[str, int]
) -> dict[str, int]:
    """Expert label wins; consensus fills the rest; unresolved items drop out."""
    gold: dict[str, int] = {}
    for item, label in consensus.items():
        if item in expert:
            gold[item] = expert[item]
        elif label is not None:
            gold[item] = label
    for item, label in expert.items():
        gold.setdefault(item, label)
    return gold


def read_assignments(path) -> dict[str, AssignmentSpec]:
    specs: dict[str, AssignmentSpec] = {}
    for lineno, obj in iter_jsonl(path):
        assignment_id = obj.get("assignment_id")
        item_ids = obj.get("item_ids")
        controls = obj.get("controls")
        if not isinstance(assignment_id, str) or not assignment_id:
            raise DatasetError(path, lineno, "missing or non-string 'assignment_id'")
        if not isinstance(item_ids, list) or not all(isinstance(i, str) for i in item_ids):
            raise DatasetError(path, lineno, "'item_ids' must be a list of strings")
        if not isinstance(controls, dict):
            raise DatasetError(path, lineno, "'controls' must be an object")
        if assignment_id in specs:
            raise DatasetError(path, lineno, f"duplicate assignment {assignment_id!r}")
        try:
            specs[assignment_id] = AssignmentSpec(
                assignment_id=assignment_id,
                item_ids=tuple(item_ids),
                control_items=dict(controls),
            )
        except ValueError as exc:
            raise DatasetError(path, lineno, str(exc)) from exc
    return specs


def read_responses(path) -> list[WorkerResponse]:
    responses = []
    for lineno, obj in iter_jsonl(path):
        assignment_id = obj.get("assignment_id")
        worker_id = obj.get("worker_id")
        duration = obj.get("duration_s")
        answers = obj.get("answers")
        if not isinstance(assignment_id, str) or not assignment_id:
            raise DatasetError(path, lineno, "missing or non-string 'assignment_id'")
        if not isinstance(worker_id, str) or not worker_id:
            raise DatasetError(path, lineno, "missing or non-string 'worker_id'")
        if not isinstance(duration, (int, float)) or isinstance(duration, bool):
            raise DatasetError(path, lineno, "'duration_s' must be a number")
        if not isinstance(answers, dict):
            raise DatasetError(path, lineno, "'answers' must be an object")
        try:
            responses.append(
                WorkerResponse(
                    assignment_id=assignment_id,
                    worker_id=worker_id,
                    duration_s=float(duration),
                    answers=dict(answers),
                )
            )
        except ValueError as exc:
            raise DatasetError(path, lineno, str(exc)) from exc
    return responses


def read_gold(path) -> dict[str, int]:
    gold: dict[str, int] = {}
    for lineno, obj in iter_jsonl(path):
        item_id = obj.get("id")
        label = obj.get("label")
        if not isinstance(item_id, str) or not item_id:
            raise DatasetError(path, lineno, "missing or non-string 'id'")
        if label not in (0, 1):
            raise DatasetError(path, lineno, f"label must be 0 or 1, got {label!r}")
        if item_id in gold:
            raise DatasetError(path, lineno, f"duplicate gold id {item_id!r}")
        gold[item_id] = label
    return gold


def build_qc_report(
    assignments: Mapping[str, AssignmentSpec],
    responses: Sequence[WorkerResponse],
    expert_gold: Mapping[str, int],
    policy: ValidationPolicy = ValidationPolicy(),
    cutoffs: Sequence[float] = DEFAULT_SWEEP_CUTOFFS,
    worker_counts: Sequence[int] = (3, 5),
    trials: int = 200,
    seed: int = 0,
) -> tuple[dict, list[SweepPoint]]:
    """Assemble the QC report payload and the cutoff-sweep table.

    Raises ValueError when responses reference unknown assignments or do not
    cover their assignment's items.
    """
    broken = sorted(
        {r.assignment_id for r in responses if r.assignment_id not in assignments}
    )
    if broken:
        raise ValueError(f"responses reference unknown assignments: {broken}")

    verdicts = []
    valid_responses = []
    control_ok_responses = []
    tally = Counter()
    for resp in responses:
        verdict = validate_response(resp, assignments[resp.assignment_id], policy)
        tally[verdict.value] += 1
        verdicts.append(
            {
                "assignment_id": resp.assignment_id,
                "worker_id": resp.worker_id,
                "duration_s": resp.duration_s,
                "verdict": verdict.value,
            }
        )
        if verdict.valid:
            valid_responses.append(resp)
        if verdict in (Verdict.OK, Verdict.TOO_FAST):
            control_ok_responses.append(resp)

    control_ids = {item for spec in assignments.values() for item in spec.control_items}
    answers_per_item: dict[str, list[int]] = defaultdict(list)
    for resp in valid_responses:
        for item, answer in sorted(resp.answers.items()):
            if item not in control_ids:
                answers_per_item[item].append(answer)

    consensus = {item: consensus_label(ans) for item, ans in sorted(answers_per_item.items())}
    unresolved = sorted(item for item, label in consensus.items() if label is None)
    gold = resolve_gold(consensus, expert_gold)
    gold_no_controls = {i: l for i, l in gold.items() if i not in control_ids}

    per_worker = _worker_kappas(valid_responses, gold_no_controls)

    reliability = {}
    for k in worker_counts:
        eligible = {
            item: answers
            for item, answers in answers_per_item.items()
            if len(answers) >= k
        }
        if len(eligible) < 2:
            reliability[str(k)] = None
            continue
        mean, low, high = worker_subset_reliability(eligible, k, trials, seed)
        reliability[str(k)] = {
            "mean": mean,
            "ci_low": low,
            "ci_high": high,
            "n_items": len(eligible),
            "trials": trials,
        }

    sweep_points = cutoff_sweep(
        control_ok_responses, gold_no_controls, cutoffs, SweepDirection.LOWER
    ) + cutoff_sweep(control_ok_responses, gold_no_controls, cutoffs, SweepDirection.UPPER)

    report = {
        "policy": {
            "min_duration_s": policy.min_duration_s,
            "require_controls": policy.require_controls,
        },
        "verdicts": verdicts,
        "retention": {
            "total": len(responses),
            "valid": len(valid_responses),
            "by_verdict": {v.value: tally.get(v.value, 0) for v in Verdict},
        },
        "consensus": consensus,
        "unresolved_items": unresolved,
        "gold": gold,
        "per_worker_kappa": per_worker,
        "fleiss_by_worker_count": reliability,
        "sweep": [
            {
                "cutoff_s": p.cutoff_s,
                "direction": p.direction.value,
                "n_retained": p.n_retained,
                "mean_kappa": p.mean_kappa,
            }
            for p in sweep_points
        ],
    }
    return report, sweep_points
