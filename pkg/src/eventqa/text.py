"""Word-level tokenization, vocabulary and model-input assembly.

Special tokens have their own vocabulary entries (``<colon>``, ``<nl>``,
``<semi>`` ...) that corpus text can never produce, so a ``:`` or ``;``
inside a paragraph stays an ordinary token and the answer separator stays
unambiguous. They render as ``:``, ``\\n``, ``;`` for display.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import RelationType

PAD, UNK, BOS, EOS, COLON, NEWLINE, SEP = "<pad>", "<unk>", "<s>", "</s>", "<colon>", "<nl>", "<semi>"
SPECIALS = (PAD, UNK, BOS, EOS, COLON, NEWLINE, SEP)
DISPLAY = {COLON: ":", NEWLINE: "\\n", SEP: ";", BOS: "<s>", EOS: "</s>", PAD: "<pad>", UNK: "<unk>"}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class AlignmentError(ValueError):
    pass


class LengthError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Lowercased word / single-punctuation tokens with character spans."""
    return [Token(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(DISPLAY.get(t, t) for t in tokens)


def type_tokens(t: RelationType) -> list[str]:
    return [tok.text for tok in tokenize(t.label)]


@dataclass
class Vocab:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        if self.itos[0] != PAD:
            raise ValueError("id 0 must be the padding token")

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def tokens(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return 0

    def special(self, token: str) -> int:
        return self.stoi[token]


def build_vocab(corpus: Sequence[str], min_count: int = 1) -> Vocab:
    """Specials first, then relation-type words, then corpus tokens with
    count >= min_count ordered by (-count, token)."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok.text for text in corpus for tok in tokenize(text))
    itos = list(SPECIALS)
    seen = set(itos)
    for t in RelationType:
        for tok in type_tokens(t):
            if tok not in seen:
                itos.append(tok)
                seen.add(tok)
    for tok, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if c >= min_count and tok not in seen:
            itos.append(tok)
            seen.add(tok)
    return Vocab(itos)


@dataclass
class AlignedSequence:
    """A formatted model input.

    `spans[i]` is the character span of token i inside its source text
    (the question for question tokens, the paragraph for paragraph tokens)
    and None for special and prefix tokens.
    """

    tokens: list[str]
    ids: list[int]
    spans: list[tuple[int, int] | None]
    segments: list[str]
    question: str
    paragraph: str
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return detokenize(self.tokens)

    def positions(self, segment: str) -> list[int]:
        return [i for i, s in enumerate(self.segments) if s == segment]

    @property
    def paragraph_limit(self) -> int:
        """Character offset up to which the paragraph survived truncation."""
        para = [self.spans[i] for i in self.positions("paragraph")]
        if not self.truncated:
            return len(self.paragraph)
        return para[-1][1] if para else 0


def _assemble(vocab: Vocab, head: list[str], t: RelationType | None, q: str, p: str,
              mid: list[str], tail: list[str], max_len: int | None) -> AlignedSequence:
    if not q.strip() or not p.strip():
        raise ValueError("question and paragraph must be non-empty")
    tokens: list[str] = []
    spans: list[tuple[int, int] | None] = []
    segments: list[str] = []

    def push(tok, span, seg):
        tokens.append(tok)
        spans.append(span)
        segments.append(seg)

    for tok in head:
        push(tok, None, "special")
    if t is not None:
        for tok in type_tokens(t):
            push(tok, None, "prefix")
        push(COLON, None, "special")
    for tok in tokenize(q):
        push(tok.text, (tok.start, tok.end), "question")
    for tok in mid:
        push(tok, None, "special")
    para = tokenize(p)
    truncated = False
    if max_len is not None:
        room = max_len - len(tokens) - len(tail)
        if room < 1:
            raise LengthError(f"question alone needs {len(tokens) + len(tail)} of {max_len} positions")
        if len(para) > room:
            para = para[:room]
            truncated = True
    for tok in para:
        push(tok.text, (tok.start, tok.end), "paragraph")
    for tok in tail:
        push(tok, None, "special")
    return AlignedSequence(tokens, vocab.ids(tokens), spans, segments, q, p, truncated)


def format_generative(vocab: Vocab, t: RelationType | None, q: str, p: str,
                      max_len: int | None = None) -> AlignedSequence:
    """``t : q \\n p </s>``; pass t=None to drop the type prefix."""
    return _assemble(vocab, [], t, q, p, [NEWLINE], [EOS], max_len)


def format_extractive(vocab: Vocab, t: RelationType | None, q: str, p: str,
                      max_len: int | None = None) -> AlignedSequence:
    """``<s> t : q </s> </s> p``; pass t=None to drop the type prefix."""
    return _assemble(vocab, [BOS], t, q, p, [EOS, EOS], [], max_len)


def format_question(vocab: Vocab, q: str) -> AlignedSequence:
    """The bare question, used to classify its relation type."""
    tokens = tokenize(q)
    toks = [tok.text for tok in tokens]
    return AlignedSequence(toks, vocab.ids(toks), [(tok.start, tok.end) for tok in tokens],
                           ["question"] * len(toks), q, "")


def align_event_spans(seq: AlignedSequence, spans: Sequence[tuple[int, int]],
                      segment: str = "paragraph") -> list[list[int]]:
    """Token positions whose character span intersects each (start, end)
    span of the given segment's source text."""
    source = seq.question if segment == "question" else seq.paragraph
    positions = seq.positions(segment)
    out = []
    for start, end in spans:
        if not (0 <= start < end <= len(source)):
            raise IndexError(f"span [{start},{end}) outside {segment} of length {len(source)}")
        hits = [i for i in positions if seq.spans[i][0] < end and start < seq.spans[i][1]]
        if not hits:
            raise AlignmentError(f"span [{start},{end}) {source[start:end]!r} covers no token")
        out.append(hits)
    return out
