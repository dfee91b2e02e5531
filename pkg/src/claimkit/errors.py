"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes):

* :class:`ValidationError` - bad input data or configuration (exit code 1).
* :class:`RuntimeFailure` - backend, model-output or pipeline failures (exit code 2).
"""
from __future__ import annotations

from typing import Any, Sequence


class ClaimError(Exception):
    """Base class for every error raised by claimkit."""


class ValidationError(ClaimError, ValueError):
    exit_code = 1


class RuntimeFailure(ClaimError, RuntimeError):
    exit_code = 2


# transcript -----------------------------------------------------------------


class EmptyTranscript(ValidationError):
    def __init__(self, msg: str = "transcript contains no parseable turns"):
        super().__init__(msg)


class UnknownSpeaker(ValidationError):
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        super().__init__(f"unknown speaker {name!r} on line {line}")


class MalformedLine(ValidationError):
    def __init__(self, line: int, content: str = ""):
        self.line = line
        self.content = content
        super().__init__(f"malformed turn on line {line}: {content!r}")


class UnmappedSpeaker(ValidationError):
    def __init__(self, name: str, line: int | None = None):
        self.name = name
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"speaker {name!r} is missing from the role map{where}")


class IdMismatch(ValidationError):
    def __init__(self, missing: Sequence[str] = (), extra: Sequence[str] = ()):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        parts = []
        if self.missing:
            parts.append(f"missing ids: {', '.join(self.missing)}")
        if self.extra:
            parts.append(f"unexpected ids: {', '.join(self.extra)}")
        super().__init__("; ".join(parts) or "id mismatch")


# schema ---------------------------------------------------------------------


class UnknownTechnique(ValidationError):
    def __init__(self, value: str):
        self.value = value
        super().__init__(f"unknown manipulative technique: {value!r}")


class UnknownRole(ValidationError):
    def __init__(self, value: str):
        self.value = value
        super().__init__(f"unknown role: {value!r}")


# dataset --------------------------------------------------------------------


class ParseError(ValidationError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateId(ValidationError):
    def __init__(self, dialogue_id: str):
        self.dialogue_id = dialogue_id
        super().__init__(f"duplicate dialogue id: {dialogue_id!r}")


class InvalidLabel(ValidationError):
    def __init__(self, dialogue_id: str, violations: Sequence[str]):
        self.dialogue_id = dialogue_id
        self.violations = list(violations)
        super().__init__(f"invalid label for {dialogue_id!r}: {'; '.join(self.violations)}")


class EmptyDataset(ValidationError):
    def __init__(self, msg: str = "dataset is empty"):
        super().__init__(msg)


class ExemplarFromEvalSplit(ValidationError):
    def __init__(self, dialogue_id: str, partition: str):
        self.dialogue_id = dialogue_id
        self.partition = partition
        super().__init__(f"exemplar {dialogue_id!r} belongs to the {partition} partition")


class WrongClassMix(ValidationError):
    def __init__(self, manipulative: int, non_manipulative: int):
        self.manipulative = manipulative
        self.non_manipulative = non_manipulative
        super().__init__(
            f"exemplars must be 3 manipulative + 2 non-manipulative, "
            f"got {manipulative} + {non_manipulative}"
        )


class ConfigError(ValidationError):
    pass


# prompts --------------------------------------------------------------------


class WrongExemplarArrangement(ValidationError):
    pass


class MissingContext(ValidationError):
    def __init__(self, kind: Any, field: str):
        self.kind = kind
        self.field = field
        super().__init__(f"{getattr(kind, 'value', kind)} prompt requires context field {field!r}")


# metrics / agreement --------------------------------------------------------


class EmptyInput(ValidationError):
    def __init__(self, msg: str = "no instances to score"):
        super().__init__(msg)


class DegenerateInput(ValidationError):
    pass


# backend --------------------------------------------------------------------


class BackendError(RuntimeFailure):
    pass


class TransportError(BackendError):
    pass


class ApiError(BackendError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:200]}")


class BudgetExceeded(BackendError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"request budget of {limit} backend calls exhausted")


class NoScriptMatch(BackendError):
    def __init__(self, prompt_digest: str):
        self.prompt_digest = prompt_digest
        super().__init__(f"no mock rule matches prompt {prompt_digest}")


# model-output parsing -------------------------------------------------------


class OutputParseError(RuntimeFailure):
    """A model response could not be mapped onto the answer schema."""

    def __init__(self, msg: str, raw: str = ""):
        self.raw = raw
        super().__init__(msg)


class MalformedDetection(OutputParseError):
    def __init__(self, raw: str):
        super().__init__(f"detection answer is neither yes nor no: {raw[:80]!r}", raw)


class NoRoleFound(OutputParseError):
    def __init__(self, raw: str, reason: str = "no speaker role found"):
        super().__init__(f"{reason}: {raw[:80]!r}", raw)


class AmbiguousRole(OutputParseError):
    def __init__(self, raw: str, roles: Sequence[Any]):
        self.roles = list(roles)
        names = ", ".join(getattr(r, "value", str(r)) for r in self.roles)
        super().__init__(f"several speaker roles named ({names}): {raw[:80]!r}", raw)


class IntentParseError(OutputParseError):
    pass


class PipelineError(RuntimeFailure):
    """A pipeline step failed; ``trace`` holds every step completed so far."""

    def __init__(self, msg: str, trace: Any = None, cause: BaseException | None = None):
        self.trace = trace
        self.cause = cause
        super().__init__(msg)
