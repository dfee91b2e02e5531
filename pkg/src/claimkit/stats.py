"""Dataset distribution summaries (class balance, technique and manipulator frequencies, lengths)."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import IdMismatch
from .schema import Label, sorted_techniques
from .transcript import Dialogue, Role, word_count


@dataclass
class DistributionReport:
    manipulative: int = 0
    non_manipulative: int = 0
    techniques: dict[str, int] = field(default_factory=dict)
    manipulators: dict[str, int] = field(default_factory=dict)
    word_counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.manipulative + self.non_manipulative

    def rows(self) -> list[tuple[str, str, int]]:
        rows = [
            ("class", "manipulative", self.manipulative),
            ("class", "non_manipulative", self.non_manipulative),
        ]
        rows += [("technique", k, v) for k, v in self.techniques.items()]
        rows += [("manipulator", k, v) for k, v in self.manipulators.items()]
        rows += [("word_count", k, v) for k, v in self.word_counts.items()]
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "key", "value"])
        writer.writerows(self.rows())
        return buf.getvalue()


def dialogue_stats(dataset: Sequence[Dialogue], labels: Mapping[str, Label]) -> DistributionReport:
    ids = {d.id for d in dataset}
    if ids != set(labels):
        raise IdMismatch(missing=ids - set(labels), extra=set(labels) - ids)

    technique_counts: Counter = Counter()
    manipulator_counts: Counter = Counter()
    report = DistributionReport()
    for d in sorted(dataset, key=lambda d: d.id):
        label = labels[d.id]
        report.word_counts[d.id] = word_count(d)
        if label.manipulative:
            report.manipulative += 1
            technique_counts.update(label.techniques)
            if label.primary_manipulator is not None:
                manipulator_counts[label.primary_manipulator] += 1
        else:
            report.non_manipulative += 1

    report.techniques = {t.value: technique_counts[t] for t in sorted_techniques(technique_counts)}
    report.manipulators = {r.value: manipulator_counts[r] for r in Role if manipulator_counts[r]}
    return report
