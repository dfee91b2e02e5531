"""Scoring for detection, primary-manipulator and technique prediction.

Conventions:

* an undefined precision or recall (zero denominator) is reported as 0;
* manipulator and technique scores cover gold-manipulative dialogues only, and
  a prediction of "not manipulative" counts as the wrong answer ``none``;
* manipulator P/R/F1 are support-weighted one-vs-rest averages, which makes
  weighted recall identical to accuracy;
* technique P/R/F1 are per-dialogue set scores averaged over dialogues, ACC is
  exact set match, and two empty sets score 1 on every measure.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Any, Hashable, Mapping

from .errors import EmptyInput, IdMismatch
from .schema import Label

NONE_CLASS = "none"


class Task(str, Enum):
    DETECTION = "detection"
    MANIPULATOR = "manipulator"
    TECHNIQUES = "techniques"


@dataclass(frozen=True)
class MetricsReport:
    task: Task
    precision: float
    recall: float
    accuracy: float
    f1: float
    n: int
    jaccard: float | None = None

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "task": self.task.value,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "n": self.n,
        }
        if self.jaccard is not None:
            out["jaccard"] = self.jaccard
        return out


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _aligned(preds: Mapping[str, Label], golds: Mapping[str, Label]) -> list[str]:
    if set(preds) != set(golds):
        raise IdMismatch(missing=set(golds) - set(preds), extra=set(preds) - set(golds))
    # Fixed reduction order keeps floating-point sums reproducible.
    return sorted(golds)


def detection_metrics(preds: Mapping[str, Label], golds: Mapping[str, Label]) -> MetricsReport:
    ids = _aligned(preds, golds)
    if not ids:
        raise EmptyInput()
    tp = fp = fn = tn = 0
    for i in ids:
        p, g = preds[i].manipulative, golds[i].manipulative
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return MetricsReport(
        Task.DETECTION, precision, recall, (tp + tn) / len(ids), _harmonic(precision, recall), len(ids)
    )


def predicted_manipulator(label: Label) -> Hashable:
    if not label.manipulative or label.primary_manipulator is None:
        return NONE_CLASS
    return label.primary_manipulator


def weighted_scores(y_true: list[Hashable], y_pred: list[Hashable]) -> tuple[float, float, float, float]:
    """Support-weighted one-vs-rest precision, recall, F1, plus accuracy."""
    n = len(y_true)
    if not n:
        return 0.0, 0.0, 0.0, 0.0
    support = Counter(y_true)
    predicted = Counter(y_pred)
    hits = Counter(t for t, p in zip(y_true, y_pred) if t == p)
    precision = recall = f1 = 0.0
    for cls, sup in support.items():
        p = _ratio(hits[cls], predicted[cls])
        r = hits[cls] / sup
        precision += sup * p
        recall += hits[cls]  # sup * r, kept integral so weighted recall == accuracy bit-for-bit
        f1 += sup * _harmonic(p, r)
    accuracy = sum(hits.values()) / n
    return precision / n, recall / n, f1 / n, accuracy


def manipulator_metrics(preds: Mapping[str, Label], golds: Mapping[str, Label]) -> MetricsReport:
    ids = [i for i in _aligned(preds, golds) if golds[i].manipulative]
    y_true = [golds[i].primary_manipulator for i in ids]
    y_pred = [predicted_manipulator(preds[i]) for i in ids]
    precision, recall, f1, accuracy = weighted_scores(y_true, y_pred)
    return MetricsReport(Task.MANIPULATOR, precision, recall, accuracy, f1, len(ids))


def jaccard(a: frozenset | set, b: frozenset | set) -> float:
    """|A ∩ B| / |A ∪ B|, with J(∅, ∅) = 1."""
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def set_scores(gold: frozenset | set, pred: frozenset | set) -> tuple[float, float, float]:
    """Per-instance precision, recall, F1 of a predicted set against the gold set."""
    if not gold and not pred:
        return 1.0, 1.0, 1.0
    overlap = len(gold & pred)
    p = _ratio(overlap, len(pred))
    r = _ratio(overlap, len(gold))
    return p, r, _harmonic(p, r)


def technique_metrics(preds: Mapping[str, Label], golds: Mapping[str, Label]) -> MetricsReport:
    ids = [i for i in _aligned(preds, golds) if golds[i].manipulative]
    if not ids:
        return MetricsReport(Task.TECHNIQUES, 0.0, 0.0, 0.0, 0.0, 0, 0.0)
    sp = sr = sf = sj = exact = 0.0
    for i in ids:
        gold = golds[i].techniques
        pred = preds[i].techniques if preds[i].manipulative else frozenset()
        p, r, f = set_scores(gold, pred)
        sp += p
        sr += r
        sf += f
        sj += jaccard(gold, pred)
        exact += gold == pred
    n = len(ids)
    return MetricsReport(Task.TECHNIQUES, sp / n, sr / n, exact / n, sf / n, n, sj / n)


def score_all(preds: Mapping[str, Label], golds: Mapping[str, Label]) -> dict[Task, MetricsReport]:
    return {
        Task.DETECTION: detection_metrics(preds, golds),
        Task.MANIPULATOR: manipulator_metrics(preds, golds),
        Task.TECHNIQUES: technique_metrics(preds, golds),
    }
