"""Event-centric QA instances: JSON I/O, validation, a templated synthetic
corpus and type-stratified few-shot subsets.

File layout (UTF-8 JSON array)::

    {"id": str, "paragraph": str, "question": str,
     "type": "Causal" | "Conditional" | "Counterfactual" | "Sub-event" | "Co-reference",
     "answers": [{"text": str, "start": int, "end": int}],
     "events": {"question": [span], "answer": [span], "other": [span]}}

with span = {"start": int, "end": int, "text": str}. Question-role spans
index into the question; every other offset indexes into the paragraph.
Offsets are character based and end-exclusive.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class RelationType(enum.IntEnum):
    CAUSAL = 0
    CONDITIONAL = 1
    COUNTERFACTUAL = 2
    SUBEVENT = 3
    COREFERENCE = 4

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value: "str | int | RelationType") -> "RelationType":
        if isinstance(value, RelationType):
            return value
        if isinstance(value, int):
            return cls(value)
        key = re.sub(r"[^a-z]", "", str(value).lower())
        try:
            return _BY_KEY[key]
        except KeyError:
            raise DatasetError(f"unknown relation type {value!r}") from None


_LABELS = {
    RelationType.CAUSAL: "Causal",
    RelationType.CONDITIONAL: "Conditional",
    RelationType.COUNTERFACTUAL: "Counterfactual",
    RelationType.SUBEVENT: "Sub-event",
    RelationType.COREFERENCE: "Co-reference",
}
_BY_KEY = {re.sub(r"[^a-z]", "", lab.lower()): t for t, lab in _LABELS.items()}

# Share of questions per type in the source corpus, in RelationType order.
DEFAULT_PROPORTIONS = (0.431, 0.213, 0.071, 0.156, 0.129)


@dataclass(frozen=True)
class EventSpan:
    start: int
    end: int
    text: str

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end, "text": self.text}


@dataclass(frozen=True)
class Answer:
    text: str
    start: int
    end: int

    def to_json(self) -> dict:
        return {"text": self.text, "start": self.start, "end": self.end}


@dataclass
class QAInstance:
    id: str
    paragraph: str
    question: str
    type: RelationType
    answers: list[Answer]
    question_events: list[EventSpan] = field(default_factory=list)
    answer_events: list[EventSpan] = field(default_factory=list)
    other_events: list[EventSpan] = field(default_factory=list)

    @property
    def answer_texts(self) -> list[str]:
        return [a.text for a in self.answers]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "paragraph": self.paragraph,
            "question": self.question,
            "type": self.type.label,
            "answers": [a.to_json() for a in self.answers],
            "events": {
                "question": [s.to_json() for s in self.question_events],
                "answer": [s.to_json() for s in self.answer_events],
                "other": [s.to_json() for s in self.other_events],
            },
        }


def _span(obj: dict) -> EventSpan:
    return EventSpan(int(obj["start"]), int(obj["end"]), str(obj["text"]))


def instance_from_json(obj: dict) -> QAInstance:
    """Field mapping from one raw record; swap this to adapt other layouts."""
    events = obj.get("events", {})
    return QAInstance(
        id=str(obj["id"]),
        paragraph=obj["paragraph"],
        question=obj["question"],
        type=RelationType.parse(obj["type"]),
        answers=[Answer(str(a["text"]), int(a["start"]), int(a["end"])) for a in obj["answers"]],
        question_events=[_span(s) for s in events.get("question", [])],
        answer_events=[_span(s) for s in events.get("answer", [])],
        other_events=[_span(s) for s in events.get("other", [])],
    )


def _check_span(inst_id: str, what: str, text: str, start: int, end: int, surface: str) -> None:
    if not (0 <= start < end <= len(text)):
        raise DatasetError(f"{inst_id}: {what} span [{start},{end}) out of range (length {len(text)})")
    if text[start:end] != surface:
        raise DatasetError(f"{inst_id}: {what} text {surface!r} != slice {text[start:end]!r}")


def validate_instance(inst: QAInstance) -> None:
    if not inst.answers:
        raise DatasetError(f"{inst.id}: no answers")
    if not inst.question.strip() or not inst.paragraph.strip():
        raise DatasetError(f"{inst.id}: empty question or paragraph")
    for a in inst.answers:
        _check_span(inst.id, "answer", inst.paragraph, a.start, a.end, a.text)
    if not inst.question_events:
        raise DatasetError(f"{inst.id}: question has no event span")
    for s in inst.question_events:
        _check_span(inst.id, "question event", inst.question, s.start, s.end, s.text)
    for s in inst.answer_events:
        _check_span(inst.id, "answer event", inst.paragraph, s.start, s.end, s.text)
        if not any(a.start <= s.start and s.end <= a.end for a in inst.answers):
            raise DatasetError(f"{inst.id}: answer event {s.text!r} lies outside every answer")
    for s in inst.other_events:
        _check_span(inst.id, "other event", inst.paragraph, s.start, s.end, s.text)
        if any(s.start < a.end and a.start < s.end for a in inst.answer_events):
            raise DatasetError(f"{inst.id}: other event {s.text!r} overlaps an answer event")


def load_dataset(path: str | Path, strict: bool = True,
                 adapter: Callable[[dict], QAInstance] = instance_from_json) -> list[QAInstance]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise DatasetError(f"{path}: top level must be a JSON array")
    out = []
    for i, obj in enumerate(raw):
        try:
            inst = adapter(obj)
            validate_instance(inst)
        except (KeyError, TypeError, ValueError) as exc:
            name = obj.get("id", f"#{i}") if isinstance(obj, dict) else f"#{i}"
            msg = str(exc) if isinstance(exc, DatasetError) else f"{name}: malformed record ({exc!r})"
            if strict:
                raise DatasetError(msg) from exc
            log.warning("skipping instance: %s", msg)
            continue
        out.append(inst)
    return out


def dumps_dataset(instances: Iterable[QAInstance]) -> str:
    return json.dumps([inst.to_json() for inst in instances], ensure_ascii=False, indent=1)


def save_dataset(instances: Iterable[QAInstance], path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(instances), encoding="utf-8")


# ---------------------------------------------------------------------------
# proportions and subsets


def largest_remainder(n: int, proportions: Iterable[float]) -> list[int]:
    """Integer counts summing to n, rounding by largest remainder (ties to
    the lower index)."""
    props = np.asarray(list(proportions), dtype=np.float64)
    exact = props * n
    counts = np.floor(exact).astype(int)
    rest = n - int(counts.sum())
    order = sorted(range(len(props)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts.tolist()


def few_shot_subset(train: list[QAInstance], n: int, seed: int = 0) -> list[QAInstance]:
    """Type-stratified subset of size n.

    Each type's pool is shuffled by `seed`; the k-th member of a pool of
    size N_t gets the key (k + 0.5) / N_t and the n smallest keys win. Any
    prefix of that order holds each type within one instance of its
    proportional share, and smaller subsets nest inside larger ones.
    """
    if n < 0 or n > len(train):
        raise DatasetError(f"subset size {n} outside [0, {len(train)}]")
    if n == 0:
        return []
    pools: dict[RelationType, list[int]] = {t: [] for t in RelationType}
    for i, inst in enumerate(train):
        pools[inst.type].append(i)
    rng = np.random.default_rng(seed)
    keyed = []
    for t in RelationType:
        pool = pools[t]
        rng.shuffle(pool)
        keyed.extend(((k + 0.5) / len(pool), int(t), i) for k, i in enumerate(pool))
    keyed.sort()
    chosen = sorted(i for _, _, i in keyed[:n])
    return [train[i] for i in chosen]


def split_dataset(instances: list[QAInstance], n_heldout: int, seed: int = 0):
    """Random (train, held-out) split."""
    if not 0 <= n_heldout <= len(instances):
        raise DatasetError("held-out size larger than dataset")
    order = np.random.default_rng(seed).permutation(len(instances))
    held = set(order[:n_heldout].tolist())
    train = [x for i, x in enumerate(instances) if i not in held]
    heldout = [x for i, x in enumerate(instances) if i in held]
    return train, heldout
