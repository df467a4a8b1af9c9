"""Templated synthetic stand-in corpus.

Each paragraph is built around one main event. One sentence links the main
event to the answer events with a connective specific to the asked
relation type; a competing sentence links it to other events through a
different relation, and filler sentences add unrelated events. Questions
carry a type-revealing cue phrase, so the relation type is recoverable
from the question alone.
"""

from __future__ import annotations

import numpy as np

from .data import (
    DEFAULT_PROPORTIONS,
    Answer,
    DatasetError,
    EventSpan,
    QAInstance,
    RelationType,
    largest_remainder,
)

TRIGGERS = (
    "storm flooding evacuation protest arrest testing charges investigation election "
    "strike shortage outbreak lockdown merger layoffs recession rally ceasefire attack "
    "explosion fire rescue collapse earthquake drought harvest famine migration riot "
    "trial verdict appeal audit scandal resignation campaign boycott blockade invasion "
    "negotiation treaty summit vote reform ban recall delay crash closure expansion "
    "launch inspection fine lawsuit bailout default rebellion curfew quarantine"
).split()

MODIFIERS = (
    "sudden major brief long violent peaceful secret public local national costly "
    "early late failed planned massive minor second final surprise"
).split()

QUESTION_TEMPLATES = {
    RelationType.CAUSAL: ("what caused the {q} ?", "why did the {q} happen ?"),
    RelationType.CONDITIONAL: (
        "what if the {q} was to happen , what was needed ?",
        "what needed to happen for the {q} ?",
    ),
    RelationType.COUNTERFACTUAL: (
        "instead of what did the {q} happen ?",
        "what would have happened without the {q} ?",
    ),
    RelationType.SUBEVENT: ("what happened as part of the {q} ?", "what did the {q} include ?"),
    RelationType.COREFERENCE: (
        "which event refers to the {q} ?",
        "what is another name for the {q} ?",
    ),
}

# {X} is the main-event phrase, {A} the related events.
RELATION_TEMPLATES = {
    RelationType.CAUSAL: ("{A} caused {X} .", "{X} happened because of {A} ."),
    RelationType.CONDITIONAL: ("{X} could only happen if {A} happened .", "{A} was required for {X} ."),
    RelationType.COUNTERFACTUAL: ("{X} happened instead of {A} .", "without {X} , {A} would have followed ."),
    RelationType.SUBEVENT: ("{X} included {A} .", "during {X} there was {A} ."),
    RelationType.COREFERENCE: ("{X} , also called {A} , was widely reported .", "{A} was another name for {X} ."),
}

FILLER_TEMPLATES = (
    "officials discussed {E} on monday .",
    "{E} was reported in the region .",
    "reporters later described {E} .",
    "many people remembered {E} .",
)

ANSWER_COUNTS = {
    RelationType.CAUSAL: (1, 2),
    RelationType.CONDITIONAL: (1, 2),
    RelationType.COUNTERFACTUAL: (1, 1),
    RelationType.SUBEVENT: (3, 4),
    RelationType.COREFERENCE: (1, 1),
}


class _TextBuilder:
    """Concatenates text pieces while tracking character offsets."""

    def __init__(self):
        self.parts: list[str] = []
        self.length = 0

    def add(self, text: str) -> tuple[int, int]:
        start = self.length
        self.parts.append(text)
        self.length += len(text)
        return start, self.length

    def text(self) -> str:
        return "".join(self.parts)


def _join_list(items: list[str]) -> list[str]:
    """Connector pieces for 'a', 'a and b', 'a , b and c'."""
    out: list[str] = []
    for i, item in enumerate(items):
        if i > 0:
            out.append(" and " if i == len(items) - 1 else " , ")
        out.append(item)
    return out


def _render(template: str, builder: _TextBuilder, slots: dict[str, list[tuple[str, str]]],
            spans: list[tuple[str, int, int, str]]) -> None:
    """Append one sentence; slots map {X}/{A}/{E} to (phrase, role) lists.

    Records (role, trigger_start, trigger_end, phrase_kind) for every event
    phrase; phrase_kind is 'phrase' for the whole phrase span.
    """
    pos = 0
    while pos < len(template):
        brace = template.find("{", pos)
        if brace < 0:
            builder.add(template[pos:])
            break
        builder.add(template[pos:brace])
        key = template[brace + 1:template.index("}", brace)]
        pos = template.index("}", brace) + 1
        pieces = _join_list([p for p, _ in slots[key]])
        roles = iter(role for _, role in slots[key])
        for piece in pieces:
            if piece in (" and ", " , "):
                builder.add(piece)
                continue
            role = next(roles)
            start, end = builder.add(piece)
            trig_start = start + piece.rindex(" ") + 1
            spans.append((role, trig_start, end, "trigger"))
            spans.append((role, start, end, "phrase"))
    builder.add(" ")


def _phrase(rng: np.random.Generator, trigger: str) -> str:
    return f"the {MODIFIERS[rng.integers(len(MODIFIERS))]} {trigger}"


def _make_instance(idx: int, rtype: RelationType, rng: np.random.Generator,
                   n_distractors: int) -> QAInstance:
    lo, hi = ANSWER_COUNTS[rtype]
    n_answers = int(rng.integers(lo, hi + 1))
    others = [t for t in RelationType if t != rtype]
    competing = others[int(rng.integers(len(others)))]
    n_competing = min(n_distractors, int(rng.integers(1, 3)))
    n_filler = max(0, n_distractors - n_competing)

    picks = rng.choice(len(TRIGGERS), size=1 + n_answers + n_distractors, replace=False)
    words = [TRIGGERS[i] for i in picks]
    main, answer_words = words[0], words[1:1 + n_answers]
    competing_words = words[1 + n_answers:1 + n_answers + n_competing]
    filler_words = words[1 + n_answers + n_competing:]

    main_phrase = _phrase(rng, main)
    sentences = [
        (RELATION_TEMPLATES[rtype][int(rng.integers(2))],
         {"X": [(main_phrase, "main")], "A": [(_phrase(rng, w), "answer") for w in answer_words]}),
        (RELATION_TEMPLATES[competing][int(rng.integers(2))],
         {"X": [(main_phrase, "main")], "A": [(_phrase(rng, w), "other") for w in competing_words]}),
    ]
    for w in filler_words:
        tmpl = FILLER_TEMPLATES[int(rng.integers(len(FILLER_TEMPLATES)))]
        sentences.append((tmpl, {"E": [(_phrase(rng, w), "other")]}))
    order = rng.permutation(len(sentences))

    builder = _TextBuilder()
    spans: list[tuple[str, int, int, str]] = []
    for i in order:
        tmpl, slots = sentences[i]
        _render(tmpl, builder, slots, spans)
    paragraph = builder.text().rstrip()

    answers, answer_events, other_events = [], [], []
    for role, start, end, kind in spans:
        if role == "answer" and kind == "phrase":
            answers.append(Answer(paragraph[start:end], start, end))
        elif role == "answer":
            answer_events.append(EventSpan(start, end, paragraph[start:end]))
        elif role == "other" and kind == "trigger":
            other_events.append(EventSpan(start, end, paragraph[start:end]))

    q_template = QUESTION_TEMPLATES[rtype][int(rng.integers(2))]
    question = q_template.format(q=main)
    q_start = q_template.index("{q}")
    q_span = EventSpan(q_start, q_start + len(main), main)

    return QAInstance(
        id=f"synth-{idx:06d}",
        paragraph=paragraph,
        question=question,
        type=rtype,
        answers=answers,
        question_events=[q_span],
        answer_events=answer_events,
        other_events=other_events,
    )


def synth_generate(n: int, proportions=DEFAULT_PROPORTIONS, seed: int = 0,
                   n_distractors: int = 4) -> list[QAInstance]:
    """Generate n instances with per-type counts from largest-remainder
    rounding of `proportions`; output is a pure function of the arguments."""
    if n <= 0:
        raise DatasetError("n must be positive")
    proportions = tuple(float(p) for p in proportions)
    if len(proportions) != len(RelationType) or abs(sum(proportions) - 1.0) > 1e-9:
        raise DatasetError("proportions must list 5 shares summing to 1")
    counts = largest_remainder(n, proportions)
    types = np.repeat(np.arange(len(RelationType)), counts)
    rng = np.random.default_rng(seed)
    rng.shuffle(types)
    return [_make_instance(i, RelationType(int(t)), rng, n_distractors) for i, t in enumerate(types)]
