"""Two-stage manipulation analysis: intent inference, then the agent cascade.

Stage 1 asks the model for each party's intent. Stage 2 runs Detector ->
(Analyzer -> Evidence, only when the detector says yes) -> Meta. Later agents
override earlier ones: Evidence supersedes Analyzer and Meta has the final
word. Baseline settings (zero-shot, few-shot, intents-only) reuse the same
parsers and trace format.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

from .backend import DEFAULT_TEMPERATURE, Backend, ChatRequest
from .errors import (
    AmbiguousRole,
    ClaimError,
    ConfigError,
    IntentParseError,
    MalformedDetection,
    NoRoleFound,
    PipelineError,
    UnknownTechnique,
)
from .prompts import (
    Exemplar,
    Finding,
    IntentSummaries,
    PromptKind,
    StageContext,
    render_agent,
    render_few_shot,
    render_stage1,
    render_zero_shot,
    with_reminder,
)
from .schema import Label, Technique, parse_technique, sorted_techniques, validate_label
from .transcript import Dialogue, Role

log = logging.getLogger(__name__)

__all__ = [
    "AgentTrace",
    "Finding",
    "IntentSummaries",
    "Setting",
    "StageContext",
    "Step",
    "TechniqueParse",
    "infer_intents",
    "parse_analysis",
    "parse_answer",
    "parse_detection",
    "parse_intents",
    "parse_manipulator",
    "parse_techniques",
    "run_baseline",
    "run_claim",
    "run_dialogue",
]


class Setting(str, Enum):
    ZERO_SHOT = "zero-shot"
    FEW_SHOT = "few-shot"
    STAGE1_ONLY = "stage1-only"
    CLAIM = "claim"


# ---------------------------------------------------------------------------
# parsers for raw model output
# ---------------------------------------------------------------------------

_EDGE_PUNCT = " \t\r\n\"'‘’“”`*_#.,;:!?()[]{}<>-–—"


def parse_detection(raw: str) -> bool:
    """Leading-token yes/no after stripping whitespace and punctuation."""
    m = re.match(r"[a-z]+", raw.strip(_EDGE_PUNCT).casefold())
    if m and m.group(0) == "yes":
        return True
    if m and m.group(0) == "no":
        return False
    raise MalformedDetection(raw)


def _role_mentions(raw: str) -> set[Role]:
    """Roles named in ``raw``, keeping only maximal (non-nested) matches."""
    spans = []
    for role in Role:
        pat = re.compile(re.escape(role.value).replace("'", "['’]"), re.IGNORECASE)
        spans += [(m.start(), m.end(), role) for m in pat.finditer(raw)]
    found = set()
    for start, end, role in spans:
        nested = any(s <= start and end <= e and (e - s) > (end - start) for s, e, _ in spans)
        if not nested:
            found.add(role)
    return found


def parse_manipulator(raw: str, present_roles: Iterable[Role]) -> Role:
    present = set(present_roles)
    found = _role_mentions(raw)
    if not found:
        raise NoRoleFound(raw)
    if len(found) > 1:
        raise AmbiguousRole(raw, sorted(found, key=lambda r: r.value))
    (role,) = found
    if present and role not in present:
        raise NoRoleFound(raw, f"{role.value} does not speak in this dialogue")
    return role


@dataclass(frozen=True)
class TechniqueParse:
    known: frozenset[Technique] = frozenset()
    unknown: tuple[str, ...] = ()


_LIST_MARKER = re.compile(r"^\s*(?:[-*•]+|\(?\d+[.)])\s*")
_NONE_WORDS = {"none", "n/a", "na", "nil"}


def _clean_fragment(s: str) -> str:
    s = _LIST_MARKER.sub("", s).strip()
    return s.strip(" \t\"'‘’“”`*_.")


def parse_techniques(raw: str) -> TechniqueParse:
    known: set[Technique] = set()
    unknown: list[str] = []
    for frag in re.split(r"[,;\n]", raw):
        frag = _clean_fragment(frag)
        if not frag or frag.casefold() in _NONE_WORDS:
            continue
        try:
            known.add(parse_technique(frag))
        except UnknownTechnique:
            unknown.append(frag)
    return TechniqueParse(frozenset(known), tuple(unknown))


_FIELD_KEYS = {
    "detection": ("manipulation present", "manipulation detected", "manipulative", "manipulation"),
    "manipulator": ("primary manipulator", "manipulator"),
    "techniques": ("manipulative techniques", "manipulation techniques", "techniques used", "techniques"),
    "evidence": ("supporting evidence", "evidence"),
}
_MULTILINE_FIELDS = {"techniques", "evidence"}


def _field_regex() -> re.Pattern[str]:
    alts = sorted(
        ((name, key) for key, names in _FIELD_KEYS.items() for name in names), key=lambda p: len(p[0]), reverse=True
    )
    body = "|".join(re.escape(name) for name, _ in alts)
    return re.compile(rf"^[\s*#>\-•]*({body})[\s*]*(?:[-:–—][\s*]*|$)(.*)$", re.IGNORECASE)


_FIELD_RE = _field_regex()
_FIELD_LOOKUP = {name: key for key, names in _FIELD_KEYS.items() for name in names}


def parse_fields(raw: str) -> dict[str, str]:
    """Extract ``Key - value`` answer lines (e.g. ``Primary Manipulator - Plaintiff``)."""
    fields: dict[str, list[str]] = {}
    current: str | None = None
    for line in raw.splitlines():
        m = _FIELD_RE.match(line)
        if m:
            current = _FIELD_LOOKUP[m.group(1).casefold()]
            fields[current] = [m.group(2).strip()]
        elif current in _MULTILINE_FIELDS and line.strip():
            fields[current].append(line.strip())
        elif not line.strip():
            current = None
    return {k: "\n".join(v for v in vals if v) for k, vals in fields.items()}


def _answer_lines(raw: str) -> list[str]:
    lines = []
    for line in raw.splitlines():
        line = _LIST_MARKER.sub("", line).strip().strip("*").strip()
        if line:
            lines.append(line)
    return lines


def _evidence_spans(text: str) -> tuple[str, ...]:
    spans = (_clean_fragment(line) for line in text.splitlines())
    return tuple(s for s in spans if s)


def parse_analysis(raw: str, present_roles: Iterable[Role], *, inherit: Finding | None = None) -> Finding:
    """Parse an Analyzer or Evidence answer.

    Labeled fields are preferred; anything the answer leaves out is taken
    from ``inherit`` (the Analyzer result, when parsing the Evidence agent).
    Unlabeled answers are read positionally: manipulator on the first line,
    techniques after it.
    """
    fields = parse_fields(raw)
    if "manipulator" in fields or "techniques" in fields:
        if "manipulator" in fields:
            who = parse_manipulator(fields["manipulator"], present_roles)
        elif inherit is not None:
            who = inherit.manipulator
        else:
            raise NoRoleFound(raw, "answer has no primary manipulator line")
        if "techniques" in fields:
            techs = parse_techniques(fields["techniques"])
        elif inherit is not None:
            techs = TechniqueParse(inherit.techniques)
        else:
            techs = TechniqueParse()
        return Finding(who, techs.known, _evidence_spans(fields.get("evidence", "")), techs.unknown)

    lines = _answer_lines(raw)
    if inherit is not None and not _role_mentions(raw):
        # An unlabeled reply that names nobody confirms the previous result.
        return inherit
    if not lines:
        raise NoRoleFound(raw, "empty answer")
    who = parse_manipulator(lines[0], present_roles)
    techs = parse_techniques("\n".join(lines[1:]))
    return Finding(who, techs.known, (), techs.unknown)


@dataclass(frozen=True)
class Answer:
    label: Label
    unknown_techniques: tuple[str, ...] = ()


def parse_answer(raw: str, present_roles: Iterable[Role], *, inherit: Finding | None = None) -> Answer:
    """Parse a combined three-question answer (baselines and the Meta agent)."""
    fields = parse_fields(raw)
    lines = _answer_lines(raw)
    labeled = "detection" in fields
    if labeled:
        detected = parse_detection(fields["detection"])
    elif lines:
        detected = parse_detection(lines[0])
    else:
        raise MalformedDetection(raw)
    if not detected:
        return Answer(Label.non_manipulative())

    if labeled or "manipulator" in fields:
        who_text = fields.get("manipulator")
        tech_text = fields.get("techniques")
    else:
        who_text = lines[1] if len(lines) > 1 else None
        tech_text = "\n".join(lines[2:]) if len(lines) > 2 else None

    if who_text is not None and who_text.strip().casefold() not in _NONE_WORDS:
        who = parse_manipulator(who_text, present_roles)
    elif inherit is not None:
        who = inherit.manipulator
    else:
        raise NoRoleFound(raw, "manipulation reported without a primary manipulator")

    if tech_text is not None:
        techs = parse_techniques(tech_text)
    elif inherit is not None:
        techs = TechniqueParse(inherit.techniques)
    else:
        techs = TechniqueParse()
    return Answer(Label(True, who, techs.known), techs.unknown)


_INTENT_HEADING = re.compile(
    r"^[ \t*#>\-]*(?:the\s+)?(plaintiff|defendant)(?:['’]s|s)?\s+intents?\b[ \t*]*[:\-–—]?[ \t*]*",
    re.IGNORECASE | re.MULTILINE,
)


def parse_intents(raw: str) -> IntentSummaries:
    """Pull the ``Plaintiff's Intent`` / ``Defendant's Intent`` sections from a Stage 1 reply."""
    heads = list(_INTENT_HEADING.finditer(raw))
    sections: dict[str, str] = {}
    for i, m in enumerate(heads):
        end = heads[i + 1].start() if i + 1 < len(heads) else len(raw)
        body = raw[m.end():end].strip()
        paragraph = re.split(r"\n\s*\n", body, maxsplit=1)[0] if body else ""
        text = " ".join(paragraph.replace("**", "").split())
        if text:
            sections[m.group(1).casefold()] = text
    missing = [p for p in ("plaintiff", "defendant") if p not in sections]
    if missing:
        raise IntentParseError(f"no {' or '.join(missing)} intent section in stage-1 reply", raw)
    return IntentSummaries(sections["plaintiff"], sections["defendant"], raw)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def _jsonable(value: Any) -> Any:
    if isinstance(value, Answer):
        out = value.label.to_dict()
        if value.unknown_techniques:
            out["unknown_techniques"] = list(value.unknown_techniques)
        return out
    if isinstance(value, Finding):
        out = {
            "primary_manipulator": value.manipulator.value,
            "techniques": [t.value for t in sorted_techniques(value.techniques)],
        }
        if value.evidence_spans:
            out["evidence_spans"] = list(value.evidence_spans)
        if value.unknown_techniques:
            out["unknown_techniques"] = list(value.unknown_techniques)
        return out
    if isinstance(value, IntentSummaries):
        return {"plaintiff_intent": value.plaintiff_intent, "defendant_intent": value.defendant_intent}
    return value


@dataclass
class Step:
    agent: PromptKind
    prompt: str
    raw_response: str
    parsed: Any = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out = {
            "agent": self.agent.value,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
            "parsed": _jsonable(self.parsed),
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class AgentTrace:
    dialogue_id: str
    setting: Setting
    steps: list[Step] = field(default_factory=list)
    final: Label | None = None
    error: str | None = None

    @property
    def agents(self) -> list[PromptKind]:
        return [s.agent for s in self.steps]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.dialogue_id,
            "setting": self.setting.value,
            "steps": [s.to_dict() for s in self.steps],
            "final": self.final.to_dict() if self.final else None,
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

_RETRYABLE = (MalformedDetection, NoRoleFound)


class _Session:
    """One dialogue's run: issues prompts, parses replies, records every call."""

    def __init__(
        self,
        d: Dialogue,
        backend: Backend,
        setting: Setting,
        *,
        model: str | None,
        temperature: float,
        max_tokens: int | None,
    ):
        self.d = d
        self.backend = backend
        self.model = model or backend.model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.trace = AgentTrace(d.id, setting)

    def _complete(self, prompt: str) -> str:
        req = ChatRequest.from_prompt(prompt, self.model, temperature=self.temperature, max_tokens=self.max_tokens)
        return self.backend.complete(req).content

    def ask(self, kind: PromptKind, prompt: str, parse: Callable[[str], Any]) -> Any:
        raw = self._complete(prompt)
        try:
            parsed = parse(raw)
        except _RETRYABLE as exc:
            log.info("%s: %s reply unparseable (%s); retrying once", self.d.id, kind.value, exc)
            self.trace.steps.append(Step(kind, prompt, raw, None, str(exc)))
            prompt = with_reminder(prompt)
            raw = self._complete(prompt)
            try:
                parsed = parse(raw)
            except ClaimError as exc2:
                self.trace.steps.append(Step(kind, prompt, raw, None, str(exc2)))
                raise
        except ClaimError as exc:
            self.trace.steps.append(Step(kind, prompt, raw, None, str(exc)))
            raise
        self.trace.steps.append(Step(kind, prompt, raw, parsed))
        return parsed

    def intents(self) -> IntentSummaries:
        return self.ask(PromptKind.STAGE1_INTENT, render_stage1(self.d), parse_intents)

    def finish(self, label: Label) -> tuple[Label, AgentTrace]:
        problems = validate_label(label)
        if problems:
            raise PipelineError(f"{self.d.id}: final label invalid: {'; '.join(problems)}", self.trace)
        self.trace.final = label
        return label, self.trace

    def guarded(self, body: Callable[[], Label]) -> tuple[Label, AgentTrace]:
        try:
            label = body()
        except PipelineError:
            raise
        except ClaimError as exc:
            self.trace.error = f"{type(exc).__name__}: {exc}"
            raise PipelineError(f"{self.d.id}: {exc}", self.trace, exc) from exc
        return self.finish(label)


def _session(d: Dialogue, backend: Backend, setting: Setting, **opts: Any) -> _Session:
    return _Session(
        d,
        backend,
        setting,
        model=opts.get("model"),
        temperature=opts.get("temperature", DEFAULT_TEMPERATURE),
        max_tokens=opts.get("max_tokens"),
    )


def infer_intents(d: Dialogue, backend: Backend, **opts: Any) -> IntentSummaries:
    """Stage 1 on its own; raises the underlying parse/backend error directly."""
    return _session(d, backend, Setting.STAGE1_ONLY, **opts).intents()


def run_claim(d: Dialogue, backend: Backend, **opts: Any) -> tuple[Label, AgentTrace]:
    s = _session(d, backend, Setting.CLAIM, **opts)
    roles = d.roles

    def body() -> Label:
        ctx = StageContext(intents=s.intents())
        ctx.detector_output = s.ask(PromptKind.DETECTOR, render_agent(PromptKind.DETECTOR, d, ctx), parse_detection)
        if not ctx.detector_output:
            # Q2/Q3 only apply to manipulative dialogues; Meta still closes the run.
            s.ask(PromptKind.META, render_agent(PromptKind.META, d, ctx), parse_detection_field)
            return Label.non_manipulative()

        ctx.analyzer_output = s.ask(
            PromptKind.ANALYZER,
            render_agent(PromptKind.ANALYZER, d, ctx),
            lambda raw: parse_analysis(raw, roles),
        )
        analyzer = ctx.analyzer_output
        ctx.evidence_output = s.ask(
            PromptKind.EVIDENCE,
            render_agent(PromptKind.EVIDENCE, d, ctx),
            lambda raw: parse_analysis(raw, roles, inherit=analyzer),
        )
        evidence = ctx.evidence_output
        answer = s.ask(
            PromptKind.META,
            render_agent(PromptKind.META, d, ctx),
            lambda raw: parse_answer(raw, roles, inherit=evidence),
        )
        return answer.label

    return s.guarded(body)


def parse_detection_field(raw: str) -> bool:
    """Detection verdict from a labeled answer, falling back to the leading token."""
    fields = parse_fields(raw)
    if "detection" in fields:
        return parse_detection(fields["detection"])
    return parse_detection(raw)


def run_baseline(
    d: Dialogue,
    backend: Backend,
    setting: Setting,
    exemplars: Sequence[Exemplar] | None = None,
    **opts: Any,
) -> tuple[Label, AgentTrace]:
    setting = Setting(setting)
    if setting is Setting.CLAIM:
        raise ValueError("use run_claim for the full pipeline")
    if setting is Setting.FEW_SHOT and not exemplars:
        raise ConfigError("few-shot prompting needs configured exemplars")
    s = _session(d, backend, setting, **opts)
    roles = d.roles

    def body() -> Label:
        if setting is Setting.ZERO_SHOT:
            kind, prompt = PromptKind.ZERO_SHOT, render_zero_shot(d)
        elif setting is Setting.FEW_SHOT:
            kind, prompt = PromptKind.FEW_SHOT, render_few_shot(d, exemplars or ())
        else:
            kind, prompt = PromptKind.ZERO_SHOT, render_zero_shot(d, s.intents())
        return s.ask(kind, prompt, lambda raw: parse_answer(raw, roles)).label

    return s.guarded(body)


def run_dialogue(
    d: Dialogue,
    backend: Backend,
    setting: Setting | str,
    exemplars: Sequence[Exemplar] | None = None,
    **opts: Any,
) -> tuple[Label, AgentTrace]:
    setting = Setting(setting)
    if setting is Setting.CLAIM:
        return run_claim(d, backend, **opts)
    return run_baseline(d, backend, setting, exemplars, **opts)
