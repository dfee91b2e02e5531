"""Prompt rendering for the baselines, the intent stage and the four agents."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

from .errors import MissingContext, WrongExemplarArrangement
from .schema import Label, Technique, sorted_techniques
from .transcript import Dialogue, Role, format_dialogue

TEMPLATE_VERSION = "1"

PARSE_RETRY_REMINDER = (
    "Reminder: reply strictly in the requested answer format. Do not add anything else."
)


class PromptKind(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    STAGE1_INTENT = "stage1_intent"
    DETECTOR = "detector"
    ANALYZER = "analyzer"
    EVIDENCE = "evidence"
    META = "meta"


AGENT_KINDS = (PromptKind.DETECTOR, PromptKind.ANALYZER, PromptKind.EVIDENCE, PromptKind.META)

# Text not taken from the published templates, per template.
NON_VERBATIM = {
    PromptKind.STAGE1_INTENT: "closing two-line intent format",
    PromptKind.ANALYZER: "answer-format block",
    PromptKind.EVIDENCE: "allowed list and answer-format block",
    PromptKind.META: "entire template",
}


@lru_cache(maxsize=None)
def load_template(kind: PromptKind) -> Template:
    text = resources.files("claimkit").joinpath(f"templates/{kind.value}.txt").read_text(encoding="utf-8")
    return Template(text.rstrip("\n"))


@dataclass(frozen=True)
class IntentSummaries:
    plaintiff_intent: str
    defendant_intent: str
    raw_reasoning: str = ""

    def render(self) -> str:
        return f"Plaintiff's Intent: {self.plaintiff_intent}\nDefendant's Intent: {self.defendant_intent}"


@dataclass(frozen=True)
class Finding:
    """Manipulator and techniques reported by the analyzer or evidence agent."""

    manipulator: Role
    techniques: frozenset[Technique] = frozenset()
    evidence_spans: tuple[str, ...] = ()
    unknown_techniques: tuple[str, ...] = ()

    def render(self) -> str:
        lines = [
            f"Primary Manipulator - {self.manipulator.value}",
            f"Manipulative Techniques - {format_techniques(self.techniques)}",
        ]
        if self.evidence_spans:
            lines.append("Evidence -")
            lines += [f"- {span}" for span in self.evidence_spans]
        return "\n".join(lines)


@dataclass
class StageContext:
    """Outputs gathered so far; fields fill in pipeline order."""

    intents: IntentSummaries | None = None
    detector_output: bool | None = None
    analyzer_output: Finding | None = None
    evidence_output: Finding | None = None


@dataclass(frozen=True)
class Exemplar:
    dialogue: Dialogue
    label: Label

    @property
    def answer(self) -> str:
        return format_answer(self.label)


def format_techniques(techniques: Sequence[Technique] | frozenset[Technique]) -> str:
    names = [t.value for t in sorted_techniques(techniques)]
    return ", ".join(names) if names else "None"


def format_answer(label: Label) -> str:
    """Expected answer text for an in-context example, one line per question."""
    if not label.manipulative:
        return "No"
    who = label.primary_manipulator.value if label.primary_manipulator else "None"
    return f"Yes\n{who}\n{format_techniques(label.techniques)}"


def allowed_list() -> str:
    return "### Allowed list:\n" + ", ".join(t.value for t in Technique)


def _yes_no(flag: bool) -> str:
    return "Yes" if flag else "No"


def render_zero_shot(d: Dialogue, intents: IntentSummaries | None = None) -> str:
    """Zero-shot prompt; with ``intents`` it becomes the intent-only (Stage 1 alone) analysis prompt."""
    body = format_dialogue(d)
    if intents is not None:
        body = f"### Intents:\n{intents.render()}\n\n### Dialogue:\n{body}"
    return load_template(PromptKind.ZERO_SHOT).substitute(allowed=allowed_list(), dialogue=body)


def render_few_shot(d: Dialogue, exemplars: Sequence[Exemplar]) -> str:
    if len(exemplars) != 5:
        raise WrongExemplarArrangement(f"few-shot prompting needs exactly 5 exemplars, got {len(exemplars)}")
    pattern = [e.label.manipulative for e in exemplars]
    if pattern != [True, True, True, False, False]:
        shown = ", ".join("manipulative" if p else "non-manipulative" for p in pattern)
        raise WrongExemplarArrangement(
            f"exemplars must be 3 manipulative then 2 non-manipulative, got: {shown}"
        )
    if any(e.dialogue.id == d.id for e in exemplars):
        raise WrongExemplarArrangement(f"dialogue {d.id!r} cannot be its own in-context example")

    sections = [
        f"Example {i}:\n{format_dialogue(e.dialogue)}\n{e.answer}" for i, e in enumerate(exemplars, 1)
    ]
    return load_template(PromptKind.FEW_SHOT).substitute(
        examples="\n\n".join(sections), allowed=allowed_list(), dialogue=format_dialogue(d)
    )


def render_stage1(d: Dialogue) -> str:
    return load_template(PromptKind.STAGE1_INTENT).substitute(dialogue=format_dialogue(d))


def _require(kind: PromptKind, ctx: StageContext, name: str):
    value = getattr(ctx, name)
    if value is None:
        raise MissingContext(kind, name)
    return value


def render_agent(kind: PromptKind, d: Dialogue, ctx: StageContext) -> str:
    if kind not in AGENT_KINDS:
        raise ValueError(f"{kind} is not a stage-2 agent")
    intents = _require(kind, ctx, "intents")
    slots = {"dialogue": format_dialogue(d), "intents": intents.render(), "allowed": allowed_list()}

    if kind is PromptKind.EVIDENCE:
        slots["analysis"] = _require(kind, ctx, "analyzer_output").render()
    elif kind is PromptKind.META:
        detected = _require(kind, ctx, "detector_output")
        slots["detection"] = _yes_no(detected)
        if detected:
            slots["analysis"] = _require(kind, ctx, "analyzer_output").render()
            slots["evidence"] = _require(kind, ctx, "evidence_output").render()
        else:
            slots["analysis"] = slots["evidence"] = "Not run (no manipulation detected)"

    return load_template(kind).substitute(slots)


def with_reminder(prompt: str) -> str:
    return f"{prompt}\n\n{PARSE_RETRY_REMINDER}"
