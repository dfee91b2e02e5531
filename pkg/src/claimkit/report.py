"""Result tables: one per task, columns P, R, ACC, F1 (+ Jc for techniques)."""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Mapping, Sequence

from .metrics import MetricsReport, Task

COLUMNS: dict[Task, tuple[str, ...]] = {
    Task.DETECTION: ("P", "R", "ACC", "F1"),
    Task.MANIPULATOR: ("P", "R", "ACC", "F1"),
    Task.TECHNIQUES: ("P", "R", "ACC", "F1", "Jc"),
}

TITLES = {
    Task.DETECTION: "Manipulation detection",
    Task.MANIPULATOR: "Primary manipulator identification",
    Task.TECHNIQUES: "Manipulation technique identification",
}

NOTES = {
    Task.DETECTION: "P, R: binary, positive class = manipulative. F1 = harmonic mean of P and R.",
    Task.MANIPULATOR: (
        "Gold-manipulative dialogues only; 'not manipulative' predictions count as wrong. "
        "P, R, F1 are support-weighted one-vs-rest averages (R equals ACC)."
    ),
    Task.TECHNIQUES: (
        "Gold-manipulative dialogues only. P, R, F1 are per-dialogue set scores averaged over dialogues; "
        "ACC = exact set match; Jc = mean Jaccard |A∩B|/|A∪B|."
    ),
}

DECIMALS = {Task.DETECTION: 3, Task.MANIPULATOR: 3, Task.TECHNIQUES: 4}

Rows = Sequence[tuple[str, MetricsReport]]


def _values(report: MetricsReport) -> list[float]:
    vals = [report.precision, report.recall, report.accuracy, report.f1]
    if report.task is Task.TECHNIQUES:
        vals.append(report.jaccard if report.jaccard is not None else 0.0)
    return vals


def render_text(task: Task, rows: Rows) -> str:
    cols = COLUMNS[task]
    places = DECIMALS[task]
    header = ["Setting", *cols]
    body = [[name, *(f"{v:.{places}f}" for v in _values(r))] for name, r in rows]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]

    def fmt(line: list[str]) -> str:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    out = [TITLES[task], fmt(header), "  ".join("-" * w for w in widths)]
    out += [fmt(line) for line in body]
    out.append("n: " + ", ".join(f"{name}={r.n}" for name, r in rows))
    out.append(NOTES[task])
    return "\n".join(out) + "\n"


def render_csv(task: Task, rows: Rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setting", *COLUMNS[task]])
    for name, r in rows:
        writer.writerow([name, *(f"{v:.6f}" for v in _values(r))])
    return buf.getvalue()


def write_reports(out_dir: str | os.PathLike[str], tables: Mapping[Task, Rows]) -> list[Path]:
    """Write ``<task>.csv``, ``<task>.txt`` and a combined ``metrics.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for task, rows in tables.items():
        for suffix, text in (("csv", render_csv(task, rows)), ("txt", render_text(task, rows))):
            path = out / f"{task.value}.{suffix}"
            path.write_text(text, encoding="utf-8")
            written.append(path)
    summary = {task.value: {name: r.as_dict() for name, r in rows} for task, rows in tables.items()}
    path = out / "metrics.json"
    path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    written.append(path)
    return written
