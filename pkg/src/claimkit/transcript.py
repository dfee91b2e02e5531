"""Courtroom dialogues: roles, turns, parsing and anonymization."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import (
    EmptyTranscript,
    MalformedLine,
    UnknownRole,
    UnknownSpeaker,
    UnmappedSpeaker,
)

TURN_DELIMITER = ": "


class Role(str, Enum):
    PLAINTIFF = "Plaintiff"
    DEFENDANT = "Defendant"
    PLAINTIFFS_LAWYER = "Plaintiff's Lawyer"
    DEFENDANTS_LAWYER = "Defendant's Lawyer"
    JUDGE = "Judge"

    @property
    def display(self) -> str:
        return self.value

    @classmethod
    def parse(cls, s: str) -> "Role":
        role = _ROLE_LOOKUP.get(_fold(s))
        if role is None:
            raise UnknownRole(s)
        return role

    def __str__(self) -> str:
        return self.value


def _fold(s: str) -> str:
    # curly apostrophes are common in transcripts and model output
    return " ".join(s.replace("’", "'").split()).casefold()


_ROLE_LOOKUP = {_fold(r.value): r for r in Role}


@dataclass(frozen=True)
class Turn:
    speaker: Role
    text: str

    def __post_init__(self) -> None:
        text = self.text.strip()
        if not text:
            raise ValueError("turn text must be non-empty")
        object.__setattr__(self, "text", text)

    def to_dict(self) -> dict[str, str]:
        return {"role": self.speaker.value, "text": self.text}


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]
    source: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("dialogue id must be non-empty")
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise EmptyTranscript(f"dialogue {self.id!r} has no turns")

    @property
    def roles(self) -> frozenset[Role]:
        return frozenset(t.speaker for t in self.turns)

    @property
    def word_count(self) -> int:
        return word_count(self)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "turns": [t.to_dict() for t in self.turns]}
        if self.source is not None:
            out["source"] = self.source
        return out

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "Dialogue":
        turns = record.get("turns")
        if not isinstance(turns, list):
            raise ValueError("record field 'turns' must be a list")
        parsed = []
        for i, t in enumerate(turns, 1):
            if not isinstance(t, Mapping) or "role" not in t or "text" not in t:
                raise ValueError(f"turn {i} must be an object with 'role' and 'text'")
            parsed.append(Turn(Role.parse(str(t["role"])), str(t["text"])))
        if not parsed:
            raise EmptyTranscript(f"dialogue {record.get('id')!r} has no turns")
        source = record.get("source")
        return cls(str(record["id"]), tuple(parsed), None if source is None else str(source))


def word_count(dialogue: Dialogue) -> int:
    """Whitespace-delimited token count over all turns (punctuation kept)."""
    return sum(len(t.text.split()) for t in dialogue.turns)


def format_dialogue(dialogue: Dialogue) -> str:
    """``Role: text`` per line, the layout used inside prompts and turn-lines files."""
    return "\n".join(f"{t.speaker.value}{TURN_DELIMITER}{' '.join(t.text.splitlines())}" for t in dialogue.turns)


def serialize_dialogue(dialogue: Dialogue, format: str = "turn-lines") -> str:
    if format == "turn-lines":
        return format_dialogue(dialogue) + "\n"
    if format == "json-record":
        return json.dumps(dialogue.to_dict(), ensure_ascii=False)
    raise ValueError(f"unknown transcript format {format!r}")


def _content_id(turns: Iterable[Turn]) -> str:
    body = "\n".join(f"{t.speaker.value}{TURN_DELIMITER}{t.text}" for t in turns)
    return "d-" + hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]


def _split_lines(raw: str) -> Iterable[tuple[int, str, str]]:
    """Yield (line number, speaker, utterance) for every non-blank line."""
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        speaker, sep, text = line.partition(TURN_DELIMITER)
        if not sep or not speaker.strip() or not text.strip():
            raise MalformedLine(lineno, line)
        yield lineno, speaker.strip(), text


def parse_transcript(
    raw: str,
    format: str = "turn-lines",
    *,
    dialogue_id: str | None = None,
    source: str | None = None,
) -> Dialogue:
    """Parse a transcript whose speakers already use canonical role names.

    ``turn-lines`` is one ``<Role>: <utterance>`` per line, split at the first
    ``": "``. ``json-record`` is a single interchange record. Transcripts with
    real speaker names go through :func:`normalize_roles` instead.
    """
    if format == "json-record":
        if not raw.strip():
            raise EmptyTranscript()
        record = json.loads(raw)
        if dialogue_id is not None:
            record = {**record, "id": dialogue_id}
        return Dialogue.from_dict(record)
    if format != "turn-lines":
        raise ValueError(f"unknown transcript format {format!r}")

    turns = []
    for lineno, speaker, text in _split_lines(raw):
        try:
            role = Role.parse(speaker)
        except UnknownRole:
            raise UnknownSpeaker(speaker, lineno) from None
        turns.append(Turn(role, text))
    if not turns:
        raise EmptyTranscript()
    return Dialogue(dialogue_id or _content_id(turns), tuple(turns), source)


def _scrub_pattern(names: Iterable[str]) -> re.Pattern[str] | None:
    # Canonical role strings are left alone so identity maps stay idempotent.
    scrub = sorted({n for n in names if n and _fold(n) not in _ROLE_LOOKUP}, key=len, reverse=True)
    if not scrub:
        return None
    alternation = "|".join(re.escape(n) for n in scrub)
    return re.compile(rf"(?<!\w)(?:{alternation})(?!\w)")


def normalize_roles(
    raw: str,
    role_map: Mapping[str, Role | str],
    *,
    dialogue_id: str | None = None,
    source: str | None = None,
) -> Dialogue:
    """Replace real speaker names with generic roles.

    Every speaker label must be a key of ``role_map``. Mentions of mapped
    names inside utterances are replaced by the role display string as well,
    so no mapped name survives in the output.
    """
    resolved = {name.strip(): r if isinstance(r, Role) else Role.parse(r) for name, r in role_map.items()}
    pattern = _scrub_pattern(resolved)
    lookup = {name: role.value for name, role in resolved.items()}

    turns = []
    for lineno, speaker, text in _split_lines(raw):
        role = resolved.get(speaker)
        if role is None:
            raise UnmappedSpeaker(speaker, lineno)
        if pattern is not None:
            text = pattern.sub(lambda m: lookup[m.group(0)], text)
        turns.append(Turn(role, text))
    if not turns:
        raise EmptyTranscript()
    return Dialogue(dialogue_id or _content_id(turns), tuple(turns), source)
