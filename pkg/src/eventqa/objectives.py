"""Training losses: answer generation / tagging, relation-type
classification, event contrastive loss, and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .text import EOS, SEP, Vocab, tokenize


class PartitionError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass
class EventVectorSets:
    question: Tensor  # (C_q, d), transformed
    answer: Tensor    # (C_a, d)
    other: Tensor     # (C_o, d)


@dataclass
class EventIndices:
    """Row indices of one instance's event tokens in a flattened H."""

    question: list[int]
    answer: list[int]
    other: list[int]

    def check(self) -> None:
        q, a, o = set(self.question), set(self.answer), set(self.other)
        if q & a or q & o or a & o:
            raise PartitionError("event token sets overlap")


def collect_event_vectors(h: Tensor, idx: EventIndices, transform) -> EventVectorSets:
    """Select event-token rows of H (N x d) and map them through the
    transform."""
    idx.check()
    n = h.shape[0]
    for rows in (idx.question, idx.answer, idx.other):
        if any(not 0 <= r < n for r in rows):
            raise ShapeError(f"event index outside H with {n} rows")

    def pick(rows):
        if not rows:
            return Tensor(np.zeros((0, h.shape[1]), dtype=h.dtype))
        return transform(ag.take_rows(h, rows))

    return EventVectorSets(pick(idx.question), pick(idx.answer), pick(idx.other))


def sample_negatives(n_other: int, k: int, rng: np.random.Generator | int) -> np.ndarray:
    """min(k, n_other) distinct indices into the other-event rows, uniformly
    without replacement."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    m = min(k, n_other)
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(n_other, size=m, replace=False)).astype(np.int64)


@dataclass
class ContrastiveResult:
    loss: Tensor
    terms: np.ndarray  # per ordered positive pair l values
    skipped: bool


def _contrastive_rows(vectors: Tensor, anchors: np.ndarray, positives: np.ndarray,
                      negatives: np.ndarray, weights: np.ndarray, tau: float) -> tuple[Tensor, np.ndarray]:
    """sum_p weights[p] * -log(exp(c_ap/tau) / (exp(c_ap/tau) + sum_k exp(c_ak/tau))).

    `negatives` is (P, K) with -1 marking unused slots.
    """
    cos = ag.cosine_matrix(vectors, vectors)
    pos = cos[anchors, positives]
    safe = np.where(negatives < 0, 0, negatives)
    neg = cos[anchors[:, None], safe]
    logits = ag.scale(ag.concat([ag.reshape(pos, (-1, 1)), neg], axis=1), 1.0 / tau)
    mask = np.concatenate([np.ones((len(anchors), 1), bool), negatives >= 0], axis=1)
    terms = ag.logsumexp(logits, axis=1, mask=mask) - ag.scale(pos, 1.0 / tau)
    loss = ag.sum_(terms * Tensor(weights.astype(vectors.dtype)))
    return loss, terms.data


def _pairs_for(nq: int, na: int, q_off: int, a_off: int, neg_rows: Sequence[int]):
    anchors, positives, negs = [], [], []
    for i in range(nq):
        for j in range(na):
            # l(i, j): question event anchors; l(j, i): answer event anchors
            anchors += [q_off + i, a_off + j]
            positives += [a_off + j, q_off + i]
            negs += [list(neg_rows), list(neg_rows)]
    return anchors, positives, negs


def contrastive_loss(sets: EventVectorSets, tau: float = 1.0, k_neg: int = 2,
                     seed: int | np.random.Generator = 0) -> ContrastiveResult:
    """Event contrastive loss for one instance.

    Every (question-event, answer-event) token pair is a positive, scored in
    both directions; both share min(k_neg, C_o) sampled other-event
    negatives. The sum of pair terms is divided by 2 (C_q + C_a).
    """
    if tau <= 0:
        raise ParameterError("temperature must be positive")
    nq, na = sets.question.shape[0], sets.answer.shape[0]
    if nq == 0 or na == 0:
        zero = Tensor(np.zeros((), dtype=sets.question.dtype))
        return ContrastiveResult(zero, np.zeros(0), True)
    neg_idx = sample_negatives(sets.other.shape[0], k_neg, seed)
    parts = [sets.question, sets.answer]
    if len(neg_idx):
        parts.append(ag.take_rows(sets.other, neg_idx))
    vectors = ag.concat(parts, axis=0)
    neg_rows = list(range(nq + na, nq + na + len(neg_idx)))
    anchors, positives, negs = _pairs_for(nq, na, 0, nq, neg_rows)
    negatives = np.full((len(anchors), max(1, len(neg_rows))), -1, dtype=np.int64)
    for r, row in enumerate(negs):
        negatives[r, :len(row)] = row
    z = 2.0 * (nq + na)
    weights = np.full(len(anchors), 1.0 / z)
    loss, terms = _contrastive_rows(vectors, np.asarray(anchors), np.asarray(positives), negatives, weights, tau)
    return ContrastiveResult(loss, terms, False)


def batch_contrastive_loss(h_flat: Tensor, batch: Sequence[EventIndices], transform, tau: float,
                           k_neg: int, rng: np.random.Generator) -> tuple[Tensor, int]:
    """Mean over instances of `contrastive_loss`, computed with one gather
    and one transform call for the whole batch. Returns (loss, n_used)."""
    if tau <= 0:
        raise ParameterError("temperature must be positive")
    rows: list[int] = []
    anchors: list[int] = []
    positives: list[int] = []
    negs: list[list[int]] = []
    z_of_pair: list[float] = []
    used = 0
    for idx in batch:
        idx.check()
        if not idx.question or not idx.answer:
            continue
        used += 1
        neg_pick = sample_negatives(len(idx.other), k_neg, rng)
        q_off = len(rows)
        rows += idx.question
        a_off = len(rows)
        rows += idx.answer
        n_off = len(rows)
        rows += [idx.other[i] for i in neg_pick]
        neg_rows = list(range(n_off, n_off + len(neg_pick)))
        a, p, n = _pairs_for(len(idx.question), len(idx.answer), q_off, a_off, neg_rows)
        anchors += a
        positives += p
        negs += n
        z_of_pair += [2.0 * (len(idx.question) + len(idx.answer))] * len(a)
    if used == 0:
        return Tensor(np.zeros((), dtype=h_flat.dtype)), 0
    vectors = transform(ag.take_rows(h_flat, rows))
    width = max(1, max(len(r) for r in negs))
    negatives = np.full((len(anchors), width), -1, dtype=np.int64)
    for r, row in enumerate(negs):
        negatives[r, :len(row)] = row
    weights = 1.0 / (np.asarray(z_of_pair) * used)
    loss, _ = _contrastive_rows(vectors, np.asarray(anchors), np.asarray(positives), negatives, weights, tau)
    return loss, used


def alignment_gap(sets: Sequence[EventVectorSets]) -> float:
    """mean cos(question, answer) - mean cos(question, other) over all
    question-event rows of all instances (pairs pooled)."""
    qa, qo = [], []
    for s in sets:
        q = s.question.data.astype(np.float64)
        if len(q) == 0:
            continue
        qn = q / np.linalg.norm(q, axis=1, keepdims=True)
        for other, sink in ((s.answer.data, qa), (s.other.data, qo)):
            if len(other):
                o = other.astype(np.float64)
                on = o / np.linalg.norm(o, axis=1, keepdims=True)
                sink.extend((qn @ on.T).ravel().tolist())
    if not qa or not qo:
        raise ValueError("need both answer and other events to measure alignment")
    return float(np.mean(qa) - np.mean(qo))


# ---------------------------------------------------------------------------
# relation type


def type_loss(logits: Tensor, gold: Sequence[int]) -> Tensor:
    """Mean cross-entropy over the batch; logits (B, n_types)."""
    gold = np.asarray(gold, dtype=np.int64)
    if logits.ndim == 1:
        logits = ag.reshape(logits, (1, -1))
        gold = gold.reshape(1)
    return ag.scale(ag.sum_(ag.pick(ag.log_softmax(logits, axis=-1), gold)), -1.0 / len(gold))


def type_loss_and_predict(model, hq: Tensor, mask: np.ndarray, gold: Sequence[int] | None = None):
    """Predicted type ids and, when gold is given, the classification loss."""
    logits = model.type_logits(hq, mask)
    pred = logits.data.argmax(axis=-1)
    loss = None if gold is None else type_loss(logits, gold)
    return pred, loss


# ---------------------------------------------------------------------------
# answer losses


def build_target(vocab: Vocab, answers: Sequence[str]) -> tuple[list[int], int]:
    """Target ids ``a1 ; a2 ; ... </s>`` and T, the count of content tokens
    (answer tokens plus separators, end token excluded)."""
    if not answers:
        raise ValueError("an instance needs at least one answer")
    ids: list[int] = []
    for i, ans in enumerate(answers):
        if i:
            ids.append(vocab.special(SEP))
        ids += vocab.ids(tok.text for tok in tokenize(ans))
    t = len(ids)
    ids.append(vocab.special(EOS))
    return ids, t


def generative_qa_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Teacher-forced token cross-entropy. targets (B, L) with 0 = padding.

    Each instance's loss is the mean over its T content tokens and the end
    token; the batch loss is the mean over instances.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:2] != targets.shape:
        raise ShapeError(f"logits {logits.shape} do not match targets {targets.shape}")
    valid = targets != 0
    counts = valid.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("empty target sequence")
    w = (valid / counts[:, None] / len(targets)).astype(logits.dtype)
    nll = ag.pick(ag.log_softmax(logits, axis=-1), targets)
    return ag.scale(ag.sum_(nll * Tensor(w)), -1.0)


def extractive_qa_loss(logits: Tensor, gold: np.ndarray, label_weight: float = 4.0) -> Tensor:
    """Weighted token cross-entropy over paragraph tokens.

    gold (B, N): tag ids, -1 on tokens outside the paragraph. Non-O tags
    weigh `label_weight`, O weighs 1; each instance is normalised by its
    total weight and the batch loss is the mean over instances.
    """
    gold = np.asarray(gold, dtype=np.int64)
    if gold.ndim == 1:
        gold = gold[None]
        logits = ag.reshape(logits, (1,) + logits.shape)
    if logits.shape[:2] != gold.shape:
        raise ShapeError(f"tag logits {logits.shape} do not match gold tags {gold.shape}")
    w = np.where(gold < 0, 0.0, np.where(gold > 0, label_weight, 1.0))
    totals = w.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ValueError("instance without paragraph tokens")
    w = (w / totals / len(gold)).astype(logits.dtype)
    nll = ag.pick(ag.log_softmax(logits, axis=-1), np.maximum(gold, 0))
    return ag.scale(ag.sum_(nll * Tensor(w)), -1.0)


# ---------------------------------------------------------------------------
# combined objective


@dataclass
class LossBundle:
    total: Tensor
    qa: float
    tc: float
    cl: float
    lambda_tc: float
    lambda_cl: float
    tau: float

    def record(self) -> dict:
        return {"L": float(self.total.data), "L_qa": self.qa, "L_tc": self.tc, "L_cl": self.cl}


def total_loss(l_qa: Tensor, l_tc: Tensor | None, l_cl: Tensor | None, lambda_tc: float = 0.1,
               lambda_cl: float = 0.1, tau: float = 1.0, no_tc: bool = False,
               no_cl: bool = False) -> LossBundle:
    """L = L_qa + lambda_tc L_tc + lambda_cl L_cl; ablated terms drop out."""
    if lambda_tc < 0 or lambda_cl < 0:
        raise ParameterError("loss weights must be non-negative")
    total = l_qa
    tc = cl = 0.0
    if l_tc is not None and not no_tc:
        tc = float(l_tc.data)
        if lambda_tc:
            total = total + ag.scale(l_tc, lambda_tc)
    if l_cl is not None and not no_cl:
        cl = float(l_cl.data)
        if lambda_cl:
            total = total + ag.scale(l_cl, lambda_cl)
    return LossBundle(total, float(l_qa.data), tc, cl, lambda_tc, lambda_cl, tau)
