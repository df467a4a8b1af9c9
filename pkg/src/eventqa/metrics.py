"""Multi-answer QA metrics: pooled token F1, HIT@1 and exact match.

All three share one normalisation: lowercase, split into word/punctuation
tokens with the package tokenizer, then drop tokens made only of
punctuation. EM compares the normalised token sequences, which also
collapses whitespace and strips leading/trailing punctuation.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .data import QAInstance, RelationType
from .text import tokenize

METRIC_NAMES = ("f1t", "hit1", "em")


def normalize_tokens(text: str) -> list[str]:
    return [t.text for t in tokenize(text) if any(ch.isalnum() for ch in t.text)]


def f1_token(pred: Sequence[str], gold: Sequence[str]) -> float:
    """F1 between the pooled token multisets of all predicted and all gold
    answers."""
    if not gold:
        raise ValueError("gold answers must be non-empty")
    p = Counter(tok for ans in pred for tok in normalize_tokens(ans))
    g = Counter(tok for ans in gold for tok in normalize_tokens(ans))
    if not p or not g:
        return 0.0
    same = sum((p & g).values())
    if same == 0:
        return 0.0
    precision = same / sum(p.values())
    recall = same / sum(g.values())
    return 2 * precision * recall / (precision + recall)


def _contains(seq: list[str], sub: list[str]) -> bool:
    n = len(sub)
    return n > 0 and any(seq[i:i + n] == sub for i in range(len(seq) - n + 1))


def hit_at_1(leftmost: str | None, triggers: Sequence[str]) -> int:
    """1 if the first predicted answer contains any gold answer trigger as a
    consecutive token run."""
    if not leftmost:
        return 0
    toks = normalize_tokens(leftmost)
    return int(any(_contains(toks, normalize_tokens(t)) for t in triggers))


def exact_match(pred: Sequence[str], gold: Sequence[str]) -> int:
    if not gold:
        raise ValueError("gold answers must be non-empty")
    gold_norm = {tuple(normalize_tokens(g)) for g in gold}
    return int(any(tuple(normalize_tokens(p)) in gold_norm for p in pred))


@dataclass
class QuestionScore:
    id: str
    type: str
    f1t: float
    hit1: int
    em: int
    prediction: list[str] = field(default_factory=list)
    predicted_type: str | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "type": self.type, "f1t": self.f1t, "hit1": self.hit1, "em": self.em,
               "prediction": self.prediction}
        if self.predicted_type is not None:
            out["predicted_type"] = self.predicted_type
        return out


def score_instance(inst: QAInstance, pred: Sequence[str], predicted_type: str | None = None) -> QuestionScore:
    gold = inst.answer_texts
    return QuestionScore(
        id=inst.id,
        type=inst.type.label,
        f1t=f1_token(pred, gold),
        hit1=hit_at_1(pred[0] if pred else None, [s.text for s in inst.answer_events]),
        em=exact_match(pred, gold),
        prediction=list(pred),
        predicted_type=predicted_type,
    )


def _means(rows: Sequence[QuestionScore]) -> dict:
    n = len(rows)
    return {m: sum(getattr(r, m) for r in rows) / n for m in METRIC_NAMES} | {"n": n}


@dataclass
class MetricsReport:
    per_question: list[QuestionScore]
    overall: dict
    per_type: dict
    type_accuracy: float | None = None

    def to_json(self) -> dict:
        out = {
            "overall": self.overall,
            "per_type": self.per_type,
            "per_question": [q.to_json() for q in self.per_question],
        }
        if self.type_accuracy is not None:
            out["type_accuracy"] = self.type_accuracy
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def build_report(predictions: dict[str, list[str]], dataset: Sequence[QAInstance],
                 predicted_types: dict[str, str] | None = None) -> MetricsReport:
    """Score one prediction list per instance and aggregate means overall
    and per relation type."""
    ids = {inst.id for inst in dataset}
    if set(predictions) != ids:
        missing = sorted(ids - set(predictions))[:3]
        extra = sorted(set(predictions) - ids)[:3]
        raise ValueError(f"prediction ids do not match dataset (missing {missing}, unexpected {extra})")
    if not dataset:
        raise ValueError("nothing to score")
    predicted_types = predicted_types or {}
    rows = [score_instance(inst, predictions[inst.id], predicted_types.get(inst.id)) for inst in dataset]
    groups: dict[str, list[QuestionScore]] = defaultdict(list)
    for r in rows:
        groups[r.type].append(r)
    per_type = {t.label: _means(groups[t.label]) for t in RelationType if groups[t.label]}
    acc = None
    if predicted_types:
        acc = sum(r.predicted_type == r.type for r in rows) / len(rows)
    return MetricsReport(rows, _means(rows), per_type, acc)
