"""The three-question labeling schema and the technique vocabulary."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import UnknownTechnique
from .transcript import Role


class Technique(str, Enum):
    # Declaration order is the order of the published definitions list.
    GASLIGHTING = "Gaslighting"
    GUILT_TRIPPING = "Guilt tripping"
    PERSUASION = "Persuasion"
    EVASION = "Evasion"
    FRAMING_THE_NARRATIVE = "Framing the narrative"
    DISMISSAL = "Dismissal"
    CHARACTER_ATTACK = "Character attack"
    DEFLECTION = "Deflection"
    MINIMIZATION = "Minimization"
    EMOTIONAL_APPEAL = "Emotional appeal"
    PLAYING_THE_VICTIM = "Playing the victim"

    @property
    def display(self) -> str:
        return self.value

    def __str__(self) -> str:
        return self.value


def _norm(s: str) -> str:
    return " ".join(s.split()).casefold()


_TECHNIQUE_LOOKUP = {_norm(t.value): t for t in Technique}


def parse_technique(s: str) -> Technique:
    """Exact match against the canonical names, ignoring case and extra whitespace."""
    t = _TECHNIQUE_LOOKUP.get(_norm(s))
    if t is None:
        raise UnknownTechnique(s)
    return t


def sorted_techniques(techniques: Iterable[Technique]) -> list[Technique]:
    return sorted(set(techniques), key=lambda t: t.value)


@dataclass(frozen=True)
class Label:
    """Answers to Q1 (manipulative?), Q2 (primary manipulator) and Q3 (techniques)."""

    manipulative: bool
    primary_manipulator: Role | None = None
    techniques: frozenset[Technique] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "techniques", frozenset(self.techniques))

    @classmethod
    def non_manipulative(cls) -> "Label":
        return cls(False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "manipulative": self.manipulative,
            "primary_manipulator": self.primary_manipulator.value if self.primary_manipulator else None,
            "techniques": [t.value for t in sorted_techniques(self.techniques)],
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "Label":
        manipulative = record["manipulative"]
        if not isinstance(manipulative, bool):
            raise ValueError("'manipulative' must be a boolean")
        who = record.get("primary_manipulator")
        techniques = record.get("techniques") or []
        if not isinstance(techniques, list):
            raise ValueError("'techniques' must be a list")
        return cls(
            manipulative,
            Role.parse(who) if who is not None else None,
            frozenset(parse_technique(str(t)) for t in techniques),
        )


def validate_label(label: Label, *, gold: bool = True) -> list[str]:
    """Return every violated Label invariant (empty list means valid).

    Predictions (``gold=False``) may claim manipulation without naming a
    manipulator; that case is scored as wrong rather than rejected.
    """
    violations = []
    if not label.manipulative:
        if label.primary_manipulator is not None:
            violations.append("non-manipulative label names a primary manipulator")
        if label.techniques:
            violations.append("non-manipulative label lists techniques")
    elif gold and label.primary_manipulator is None:
        violations.append("manipulative label has no primary manipulator")
    return violations
