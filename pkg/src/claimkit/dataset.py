"""LegalCon-format JSONL corpora: loading, splitting, exemplar selection.

Interchange record (one per line)::

    {"id": "...", "turns": [{"role": "Judge", "text": "..."}, ...],
     "source": "...",                       # optional
     "manipulative": true,                  # optional gold fields
     "primary_manipulator": "Plaintiff",
     "techniques": ["Emotional appeal"]}
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .errors import (
    ClaimError,
    ConfigError,
    DuplicateId,
    EmptyDataset,
    ExemplarFromEvalSplit,
    InvalidLabel,
    ParseError,
    WrongClassMix,
)
from .prompts import Exemplar
from .schema import Label, validate_label
from .transcript import Dialogue

DEFAULT_RATIOS = (0.70, 0.15, 0.15)
PARTITIONS = ("train", "val", "test")
LABEL_FIELDS = ("manipulative", "primary_manipulator", "techniques")


@dataclass(frozen=True)
class Record:
    dialogue: Dialogue
    label: Label | None = None

    @property
    def id(self) -> str:
        return self.dialogue.id

    def to_dict(self) -> dict[str, Any]:
        out = self.dialogue.to_dict()
        if self.label is not None:
            out.update(self.label.to_dict())
        return out


@dataclass
class Dataset:
    records: list[Record]
    name: str = ""
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index: dict[str, Record] = {}
        for r in self.records:
            if r.id in self._index:
                raise DuplicateId(r.id)
            if r.label is not None:
                problems = validate_label(r.label)
                if problems:
                    raise InvalidLabel(r.id, problems)
            self._index[r.id] = r

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __contains__(self, dialogue_id: str) -> bool:
        return dialogue_id in self._index

    def __getitem__(self, dialogue_id: str) -> Record:
        return self._index[dialogue_id]

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def dialogues(self) -> list[Dialogue]:
        return [r.dialogue for r in self.records]

    def golds(self, ids: Iterable[str] | None = None) -> dict[str, Label]:
        chosen = self.records if ids is None else [self._index[i] for i in ids]
        return {r.id: r.label for r in chosen if r.label is not None}

    def subset(self, ids: Iterable[str]) -> "Dataset":
        return Dataset([self._index[i] for i in ids], self.name, dict(self.provenance))


def _record_from_json(rec: Any, lineno: int) -> Record:
    if not isinstance(rec, dict):
        raise ParseError(lineno, "record must be a JSON object")
    if "id" not in rec or not isinstance(rec["id"], str) or not rec["id"]:
        raise ParseError(lineno, "record needs a non-empty string 'id'")
    try:
        dialogue = Dialogue.from_dict(rec)
        label = Label.from_dict(rec) if "manipulative" in rec else None
    except ClaimError as exc:
        raise ParseError(lineno, str(exc)) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(lineno, str(exc)) from exc
    return Record(dialogue, label)


def read_jsonl(path: str | os.PathLike[str]) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None


def load_dataset(path: str | os.PathLike[str], name: str | None = None) -> Dataset:
    records = []
    seen: set[str] = set()
    for lineno, obj in read_jsonl(path):
        rec = _record_from_json(obj, lineno)
        if rec.id in seen:
            raise DuplicateId(rec.id)
        seen.add(rec.id)
        if rec.label is not None:
            problems = validate_label(rec.label)
            if problems:
                raise InvalidLabel(rec.id, problems)
        records.append(rec)
    return Dataset(records, name or Path(path).stem, {"path": str(path)})


def write_jsonl(path: str | os.PathLike[str], rows: Iterable[Mapping[str, Any]]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_dataset(path: str | os.PathLike[str], records: Iterable[Record]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def load_labels(path: str | os.PathLike[str], *, gold: bool = False) -> dict[str, Label]:
    """Read ``{id, manipulative, primary_manipulator, techniques}`` rows (turns optional)."""
    labels: dict[str, Label] = {}
    for lineno, obj in read_jsonl(path):
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
            raise ParseError(lineno, "record needs a string 'id'")
        if "manipulative" not in obj:
            raise ParseError(lineno, "record has no 'manipulative' field")
        try:
            label = Label.from_dict(obj)
        except (ClaimError, ValueError, KeyError, TypeError) as exc:
            raise ParseError(lineno, str(exc)) from exc
        if obj["id"] in labels:
            raise DuplicateId(obj["id"])
        problems = validate_label(label, gold=gold)
        if problems:
            raise InvalidLabel(obj["id"], problems)
        labels[obj["id"]] = label
    return labels


def write_predictions(path: str | os.PathLike[str], preds: Mapping[str, Label]) -> None:
    write_jsonl(path, ({"id": i, **preds[i].to_dict()} for i in sorted(preds)))


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int) -> Iterator[int]:
    """SplitMix64 stream; chosen because it is trivial to reimplement exactly."""
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def seeded_shuffle(ids: Sequence[str], seed: int) -> list[str]:
    """Sort ids by code point, then Fisher-Yates from the back with j = next() % (i + 1)."""
    out = sorted(ids)
    rng = splitmix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = next(rng) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def partition_sizes(n: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> tuple[int, int, int]:
    """floor(n*train), floor(n*val), remainder to test; ratios read as exact decimals."""
    if len(ratios) != 3:
        raise ConfigError("split ratios need exactly three values (train, val, test)")
    exact = [Fraction(str(r)) for r in ratios]
    if any(r < 0 for r in exact) or abs(float(sum(exact)) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be non-negative and sum to 1, got {list(ratios)}")
    train = int(n * exact[0])
    val = int(n * exact[1])
    return train, val, n - train - val


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int = 0
    ratios: tuple[float, float, float] = DEFAULT_RATIOS

    def __post_init__(self) -> None:
        parts = [set(self.train), set(self.val), set(self.test)]
        if sum(map(len, parts)) != len(set().union(*parts)):
            raise ConfigError("split partitions overlap")

    def partition(self, name: str) -> tuple[str, ...]:
        if name not in PARTITIONS:
            raise ConfigError(f"unknown partition {name!r}; expected one of {PARTITIONS}")
        return getattr(self, name)

    def partition_of(self, dialogue_id: str) -> str | None:
        for name in PARTITIONS:
            if dialogue_id in getattr(self, name):
                return name
        return None

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def to_manifest(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
        }

    @classmethod
    def from_manifest(cls, data: Mapping[str, Any]) -> "Split":
        try:
            return cls(
                tuple(data["train"]),
                tuple(data["val"]),
                tuple(data["test"]),
                int(data.get("seed", 0)),
                tuple(data.get("ratios", DEFAULT_RATIOS)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid split manifest: {exc}") from exc

    def save(self, path: str | os.PathLike[str]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_manifest(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "Split":
        return cls.from_manifest(json.loads(Path(path).read_text(encoding="utf-8")))


def split_dataset(
    ds: Dataset | Sequence[str], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> Split:
    ids = ds.ids if isinstance(ds, Dataset) else list(ds)
    if not ids:
        raise EmptyDataset()
    n_train, n_val, _ = partition_sizes(len(ids), ratios)
    order = seeded_shuffle(ids, seed)
    return Split(
        tuple(sorted(order[:n_train])),
        tuple(sorted(order[n_train:n_train + n_val])),
        tuple(sorted(order[n_train + n_val:])),
        seed,
        tuple(float(r) for r in ratios),
    )


def select_exemplars(ds: Dataset, ids: Sequence[str], split: Split) -> list[Exemplar]:
    """Five training dialogues arranged as 3 manipulative followed by 2 non-manipulative."""
    if len(ids) != 5 or len(set(ids)) != 5:
        raise ConfigError(f"few-shot prompting needs 5 distinct exemplar ids, got {list(ids)}")
    manip, clean = [], []
    for i in ids:
        where = split.partition_of(i)
        if where in ("val", "test"):
            raise ExemplarFromEvalSplit(i, where)
        if where is None or i not in ds:
            raise ConfigError(f"exemplar {i!r} is not in the training partition")
        rec = ds[i]
        if rec.label is None:
            raise ConfigError(f"exemplar {i!r} has no gold label")
        (manip if rec.label.manipulative else clean).append(Exemplar(rec.dialogue, rec.label))
    if len(manip) != 3 or len(clean) != 2:
        raise WrongClassMix(len(manip), len(clean))
    return manip + clean
