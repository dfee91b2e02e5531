"""Inter-annotator agreement: Cohen's kappa and Krippendorff's alpha."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .errors import DegenerateInput
from .metrics import jaccard

Distance = Callable[[Any, Any], float]


def cohen_kappa(a1: Sequence[Hashable], a2: Sequence[Hashable]) -> float:
    """Chance-corrected agreement of two annotators over the same units.

    When chance agreement is already certain (both annotators used a single
    identical category) kappa is 1 for perfect observed agreement, else 0.
    """
    if len(a1) != len(a2):
        raise DegenerateInput(f"annotators labeled different numbers of units ({len(a1)} vs {len(a2)})")
    if len(a1) < 2:
        raise DegenerateInput("cohen's kappa needs at least 2 units")
    if any(v is None for v in (*a1, *a2)):
        raise DegenerateInput("cohen's kappa does not accept missing labels")
    n = len(a1)
    p_o = sum(x == y for x, y in zip(a1, a2)) / n
    m1, m2 = Counter(a1), Counter(a2)
    p_e = sum(m1[k] * m2[k] for k in m1) / (n * n)
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return (p_o - p_e) / (1 - p_e)


def nominal_distance(a: Any, b: Any) -> float:
    return 0.0 if a == b else 1.0


def set_jaccard_distance(a: Any, b: Any) -> float:
    return 1.0 - jaccard(frozenset(a), frozenset(b))


DISTANCES: dict[str, Distance] = {"nominal": nominal_distance, "set-jaccard": set_jaccard_distance}


@dataclass
class AnnotationSet:
    """``units[unit_id][annotator] = value``; absent or ``None`` values are missing."""

    units: dict[str, dict[str, Any]]

    def __post_init__(self) -> None:
        self.units = {
            str(u): {str(a): v for a, v in row.items() if v is not None} for u, row in self.units.items()
        }
        annotators = {a for row in self.units.values() for a in row}
        if len(annotators) < 2:
            raise DegenerateInput("agreement needs at least 2 annotators")
        if not any(len(row) >= 2 for row in self.units.values()):
            raise DegenerateInput("no unit was labeled by 2 or more annotators")

    @classmethod
    def from_annotators(cls, by_annotator: Mapping[str, Mapping[str, Any]]) -> "AnnotationSet":
        units: dict[str, dict[str, Any]] = defaultdict(dict)
        for annotator, labels in by_annotator.items():
            for unit, value in labels.items():
                units[unit][annotator] = value
        return cls(dict(units))

    @property
    def annotators(self) -> list[str]:
        return sorted({a for row in self.units.values() for a in row})

    def pairable(self) -> list[list[Any]]:
        """Value lists of units carrying at least two annotations, in unit-id order."""
        return [list(row.values()) for _, row in sorted(self.units.items()) if len(row) >= 2]


def _hashable(value: Any) -> Hashable:
    if isinstance(value, (set, frozenset, list, tuple)):
        return frozenset(value)
    return value


def krippendorff_alpha(ann: AnnotationSet, distance: str | Distance = "nominal") -> float:
    """Alpha = 1 - D_o / D_e via the coincidence matrix of pairable values.

    ``distance`` is ``"nominal"`` (Q1/Q2), ``"set-jaccard"`` (1 - Jaccard, for
    technique sets) or any symmetric callable with delta(v, v) = 0.
    """
    delta = DISTANCES[distance] if isinstance(distance, str) else distance
    units = [[_hashable(v) for v in vals] for vals in ann.pairable()]
    if len(units) < 2:
        raise DegenerateInput("krippendorff's alpha needs at least 2 units with 2+ annotations")

    coincidence: dict[tuple[Hashable, Hashable], float] = defaultdict(float)
    for vals in units:
        weight = 1.0 / (len(vals) - 1)
        for i, c in enumerate(vals):
            for j, k in enumerate(vals):
                if i != j:
                    coincidence[c, k] += weight

    marginals: dict[Hashable, float] = defaultdict(float)
    for (c, _), w in coincidence.items():
        marginals[c] += w
    n = sum(marginals.values())

    observed = sum(w * delta(c, k) for (c, k), w in coincidence.items()) / n
    values = list(marginals)
    expected = sum(
        marginals[c] * marginals[k] * delta(c, k) for c in values for k in values if c != k
    ) / (n * (n - 1))
    if expected == 0:
        return 1.0
    return 1.0 - observed / expected


FILTER_NOTE = (
    "Q2 and Q3 only count annotations from annotators who marked the dialogue manipulative (Q1 = yes); "
    "Q2 kappa uses dialogues both annotators marked manipulative."
)


def _pairwise_kappa(pairs: list[tuple[str, str]], series: Callable[[str, str], tuple[list, list]]):
    results = {}
    for a, b in pairs:
        x, y = series(a, b)
        try:
            results[f"{a}~{b}"] = {"kappa": cohen_kappa(x, y), "units": len(x)}
        except DegenerateInput as exc:
            results[f"{a}~{b}"] = {"kappa": None, "units": len(x), "note": str(exc)}
    defined = [r["kappa"] for r in results.values() if r["kappa"] is not None]
    return (sum(defined) / len(defined) if defined else None), results


def agreement_report(annotations: Mapping[str, Mapping[str, Any]]) -> dict[str, Any]:
    """Q1/Q2 Cohen's kappa and Q3 Krippendorff's alpha (set-Jaccard distance).

    ``annotations[annotator][unit_id]`` is a :class:`~claimkit.schema.Label`.
    With more than two annotators the kappa values are averaged over pairs.
    A Q1 failure raises; Q2/Q3 values that are undefined on the filtered
    subset are reported as ``None`` with the reason.
    """
    names = sorted(annotations)
    if len(names) < 2:
        raise DegenerateInput("agreement needs at least 2 annotators")
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]

    def shared(a: str, b: str) -> list[str]:
        return sorted(set(annotations[a]) & set(annotations[b]))

    def q1(a: str, b: str):
        ids = shared(a, b)
        return [annotations[a][i].manipulative for i in ids], [annotations[b][i].manipulative for i in ids]

    def q2(a: str, b: str):
        ids = [i for i in shared(a, b) if annotations[a][i].manipulative and annotations[b][i].manipulative]
        return (
            [annotations[a][i].primary_manipulator for i in ids],
            [annotations[b][i].primary_manipulator for i in ids],
        )

    q1_pairs = {}
    for a, b in pairs:
        x, y = q1(a, b)
        q1_pairs[f"{a}~{b}"] = {"kappa": cohen_kappa(x, y), "units": len(x)}
    q1_value = sum(r["kappa"] for r in q1_pairs.values()) / len(q1_pairs)
    q2_value, q2_pairs = _pairwise_kappa(pairs, q2)

    q3: dict[str, Any] = {"alpha": None}
    units: dict[str, dict[str, Any]] = {}
    for name in names:
        for unit, label in annotations[name].items():
            if label.manipulative:
                units.setdefault(unit, {})[name] = frozenset(label.techniques)
    try:
        q3_set = AnnotationSet(units)
        q3["alpha"] = krippendorff_alpha(q3_set, "set-jaccard")
        q3["units"] = len(q3_set.pairable())
    except DegenerateInput as exc:
        q3["note"] = str(exc)

    return {
        "annotators": names,
        "q1_kappa": q1_value,
        "q1_pairs": q1_pairs,
        "q2_kappa": q2_value,
        "q2_pairs": q2_pairs,
        "q3_alpha": q3["alpha"],
        "q3": q3,
        "note": FILTER_NOTE,
    }


def format_agreement(report: Mapping[str, Any]) -> str:
    def show(v: float | None) -> str:
        return "n/a" if v is None else f"{v:.4f}"

    lines = [
        f"Annotators: {', '.join(report['annotators'])}",
        f"Q1 (manipulative?)        Cohen's kappa       {show(report['q1_kappa'])}",
        f"Q2 (primary manipulator)  Cohen's kappa       {show(report['q2_kappa'])}",
        f"Q3 (techniques)           Krippendorff alpha  {show(report['q3_alpha'])}  (distance: 1 - Jaccard)",
    ]
    for pair, r in report["q2_pairs"].items():
        if r.get("note"):
            lines.append(f"  Q2 {pair}: {r['note']}")
    if report["q3"].get("note"):
        lines.append(f"  Q3: {report['q3']['note']}")
    lines.append(report["note"])
    return "\n".join(lines) + "\n"
