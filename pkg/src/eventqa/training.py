"""Training, evaluation, embedding projection and few-shot sweeps."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .data import QAInstance, RelationType, few_shot_subset
from .metrics import MetricsReport, build_report
from .model import EventQAModel, ModelConfig, extract_runs, runs_to_answers, split_answers
from .objectives import (
    EventIndices,
    EventVectorSets,
    alignment_gap,
    batch_contrastive_loss,
    build_target,
    extractive_qa_loss,
    generative_qa_loss,
    total_loss,
    type_loss,
)
from .optim import Adam, OptimizerConfig
from .text import (
    BOS,
    EOS,
    AlignedSequence,
    AlignmentError,
    LengthError,
    Vocab,
    align_event_spans,
    build_vocab,
    format_extractive,
    format_generative,
    format_question,
)

log = logging.getLogger(__name__)

DEFAULT_BATCHING = {"generative": (2, 3), "extractive": (8, 2)}


class RunConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    setting: str = "generative"
    tagging: str = "io"
    layers: int = 2
    heads: int = 4
    d: int = 64
    ff: int = 128
    max_len: int = 192
    max_answer_len: int = 40
    dropout: float = 0.1
    tau: float = 1.0
    lambda_tc: float = 0.1
    lambda_cl: float = 0.1
    k_neg: int = 2
    label_weight: float = 4.0
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.95
    warmup: float = 0.1
    max_grad_norm: float | None = 1.0
    batch_size: int | None = None
    accum_steps: int | None = None
    epochs: int = 10
    seed: int = 0
    no_prefix: bool = False
    no_tc: bool = False
    no_cl: bool = False
    no_transm: bool = False
    min_count: int = 1
    eval_batch_size: int = 64
    train_path: str | None = None
    eval_path: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        bs, acc = DEFAULT_BATCHING.get(self.setting, (8, 1))
        if self.batch_size is None:
            self.batch_size = bs
        if self.accum_steps is None:
            self.accum_steps = acc

    def validate(self) -> None:
        if self.setting not in DEFAULT_BATCHING:
            raise RunConfigError(f"unknown setting {self.setting!r}")
        if self.tau <= 0:
            raise RunConfigError("tau must be positive")
        if self.lambda_tc < 0 or self.lambda_cl < 0:
            raise RunConfigError("loss weights must be non-negative")
        if self.batch_size < 1 or self.accum_steps < 1 or self.epochs < 0:
            raise RunConfigError("batch size, accumulation steps and epochs must be positive")
        if self.k_neg < 0:
            raise RunConfigError("k_neg must be non-negative")
        self.model_config(1).validate()

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, layers=self.layers, heads=self.heads, d=self.d, ff=self.ff,
            max_len=self.max_len, max_answer_len=self.max_answer_len, dropout=self.dropout,
            seed=self.seed, setting=self.setting, tagging=self.tagging,
            use_transform=not self.no_transm,
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay,
                               self.warmup, self.max_grad_norm)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise RunConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# featurisation


@dataclass
class Example:
    instance: QAInstance
    seq: AlignedSequence
    question_ids: list[int]
    events: EventIndices
    target: list[int] | None = None  # generative
    target_len: int = 0
    tags: list[int] | None = None    # extractive, -1 outside the paragraph


def format_input(setting: str, vocab: Vocab, t: RelationType | None, q: str, p: str,
                 max_len: int | None) -> AlignedSequence:
    fmt = format_generative if setting == "generative" else format_extractive
    return fmt(vocab, t, q, p, max_len)


def featurize(inst: QAInstance, vocab: Vocab, cfg: RunConfig) -> Example | None:
    """Training features from gold annotations; None (with a warning) when
    the instance cannot be used."""
    t = None if cfg.no_prefix else inst.type
    try:
        seq = format_input(cfg.setting, vocab, t, inst.question, inst.paragraph, cfg.max_len)
    except LengthError as exc:
        log.warning("skipping %s: %s", inst.id, exc)
        return None
    limit = seq.paragraph_limit
    if any(a.end > limit for a in inst.answers):
        log.warning("skipping %s: an answer does not survive truncation", inst.id)
        return None
    try:
        q_rows = align_event_spans(seq, [(s.start, s.end) for s in inst.question_events], "question")
        a_rows = align_event_spans(seq, [(s.start, s.end) for s in inst.answer_events], "paragraph")
        kept = [s for s in inst.other_events if s.end <= limit]
        o_rows = align_event_spans(seq, [(s.start, s.end) for s in kept], "paragraph")
    except AlignmentError as exc:
        log.warning("skipping %s: %s", inst.id, exc)
        return None
    flat = lambda groups: sorted({i for g in groups for i in g})  # noqa: E731
    q_idx, a_idx = flat(q_rows), flat(a_rows)
    o_idx = [i for i in flat(o_rows) if i not in set(a_idx)]
    events = EventIndices(q_idx, a_idx, o_idx)
    ex = Example(inst, seq, format_question(vocab, inst.question).ids, events)
    if cfg.setting == "generative":
        ex.target, ex.target_len = build_target(vocab, inst.answer_texts)
    else:
        ex.tags = gold_tags(seq, inst, cfg.tagging)
    return ex


def gold_tags(seq: AlignedSequence, inst: QAInstance, scheme: str) -> list[int]:
    tags = [-1] * len(seq)
    para = seq.positions("paragraph")
    for i in para:
        tags[i] = 0
    for rows in align_event_spans(seq, [(a.start, a.end) for a in inst.answers], "paragraph"):
        for k, i in enumerate(rows):
            tags[i] = (1 if k == 0 else 2) if scheme == "bio" else 1
    return tags


def _pad(rows: Sequence[Sequence[int]], value: int = 0) -> np.ndarray:
    n = max(len(r) for r in rows)
    out = np.full((len(rows), n), value, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


# ---------------------------------------------------------------------------
# losses for one batch


def batch_losses(model: EventQAModel, vocab: Vocab, batch: Sequence[Example], cfg: RunConfig,
                 rng: np.random.Generator):
    ids = _pad([ex.seq.ids for ex in batch])
    pad = ids == 0
    h = model.encode_batch(ids, pad)
    if cfg.setting == "generative":
        tgt = _pad([ex.target for ex in batch])
        bos = np.full((len(batch), 1), vocab.special(BOS), dtype=np.int64)
        dec_in = np.concatenate([bos, tgt[:, :-1]], axis=1)
        l_qa = generative_qa_loss(model.decoder_logits(h, pad, dec_in), tgt)
    else:
        tags = _pad([ex.tags for ex in batch], value=-1)
        l_qa = extractive_qa_loss(model.tag_logits(h), tags, cfg.label_weight)

    l_tc = None
    if not cfg.no_tc:
        qids = _pad([ex.question_ids for ex in batch])
        hq = model.encode_batch(qids, qids == 0)
        l_tc = type_loss(model.type_logits(hq, qids != 0), [int(ex.instance.type) for ex in batch])

    l_cl = None
    if not cfg.no_cl:
        b, n, d = h.shape
        h_flat = ag.reshape(h, (b * n, d))
        shifted = [EventIndices([i + k * n for i in ex.events.question],
                                [i + k * n for i in ex.events.answer],
                                [i + k * n for i in ex.events.other]) for k, ex in enumerate(batch)]
        l_cl, _ = batch_contrastive_loss(h_flat, shifted, model.transform, cfg.tau, cfg.k_neg, rng)
    return total_loss(l_qa, l_tc, l_cl, cfg.lambda_tc, cfg.lambda_cl, cfg.tau, cfg.no_tc, cfg.no_cl)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: EventQAModel
    vocab: Vocab
    log: list[dict]
    skipped: int
    seconds: float

    @property
    def final_loss(self) -> float:
        return self.log[-1]["L"] if self.log else float("nan")


def corpus_texts(instances: Sequence[QAInstance]) -> list[str]:
    return [x for inst in instances for x in (inst.question, inst.paragraph)]


def new_model(cfg: RunConfig, vocab: Vocab) -> EventQAModel:
    return EventQAModel(cfg.model_config(len(vocab)))


def train(cfg: RunConfig, train_set: Sequence[QAInstance], vocab: Vocab | None = None,
          out_dir: str | Path | None = None, overfit_batch: bool = False) -> TrainResult:
    """Fit a model with the combined objective.

    Gold relation types feed the input prefix and gold triggers feed the
    contrastive loss. With `overfit_batch`, every step reuses the first
    batch.
    """
    cfg.validate()
    start = time.perf_counter()
    if vocab is None:
        vocab = build_vocab(corpus_texts(train_set), cfg.min_count)
    model = new_model(cfg, vocab)
    examples = [ex for ex in (featurize(x, vocab, cfg) for x in train_set) if ex is not None]
    skipped = len(train_set) - len(examples)
    records: list[dict] = []
    if examples and cfg.epochs > 0:
        records = _fit(model, vocab, examples, cfg, overfit_batch)
    result = TrainResult(model, vocab, records, skipped, time.perf_counter() - start)
    if out_dir is not None:
        write_run_artifacts(result, cfg, out_dir)
    return result


def _fit(model: EventQAModel, vocab: Vocab, examples: list[Example], cfg: RunConfig,
         overfit_batch: bool) -> list[dict]:
    order_rng = np.random.default_rng(cfg.seed)
    neg_rng = np.random.default_rng(cfg.seed + 7)
    per_epoch = math.ceil(len(examples) / cfg.batch_size)
    steps_per_epoch = math.ceil(per_epoch / cfg.accum_steps)
    opt = Adam(model.params, cfg.optimizer_config(), steps_per_epoch * cfg.epochs, model.no_decay_names())
    model.train()
    records = []
    for epoch in range(cfg.epochs):
        order = np.arange(len(examples)) if overfit_batch else order_rng.permutation(len(examples))
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if overfit_batch:
            batches = [batches[0]] * len(batches)
        for s in range(0, len(batches), cfg.accum_steps):
            group = batches[s:s + cfg.accum_steps]
            sums = {"L": 0.0, "L_qa": 0.0, "L_tc": 0.0, "L_cl": 0.0}
            opt.zero_grad()
            for b in group:
                bundle = batch_losses(model, vocab, [examples[i] for i in b], cfg, neg_rng)
                ag.scale(bundle.total, 1.0 / len(group)).backward()
                for k, v in bundle.record().items():
                    sums[k] += v / len(group)
            lr = opt.lr
            opt.step()
            records.append({"step": opt.state.step, "epoch": epoch, "lr": lr, **sums})
    model.eval()
    return records


def write_run_artifacts(result: TrainResult, cfg: RunConfig, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "model.npz", result.vocab, extra={"run_config": cfg.to_json()})
    with open(out / "loss_log.jsonl", "w") as fh:
        for rec in result.log:
            fh.write(json.dumps(rec) + "\n")
    report = {"transform": result.model.transform.report(), "skipped_instances": result.skipped,
              "steps": len(result.log), "final_loss": result.final_loss}
    (out / "transform_report.json").write_text(json.dumps(report, indent=2))


def load_run(path: str | Path) -> tuple[EventQAModel, Vocab, RunConfig]:
    model, vocab, extra = EventQAModel.load(path)
    if vocab is None:
        raise ValueError(f"checkpoint {path} carries no vocabulary")
    cfg = RunConfig.from_json(extra["run_config"]) if "run_config" in extra else RunConfig(
        setting=model.config.setting, tagging=model.config.tagging)
    return model, vocab, cfg


# ---------------------------------------------------------------------------
# inference and evaluation


@dataclass(frozen=True)
class Query:
    """What the predictor may see of an instance: no answers, triggers or
    relation type."""

    id: str
    question: str
    paragraph: str


def queries_of(instances: Sequence[QAInstance]) -> list[Query]:
    return [Query(x.id, x.question, x.paragraph) for x in instances]


def predict_types(model: EventQAModel, vocab: Vocab, queries: Sequence[Query],
                  batch_size: int = 64) -> list[RelationType]:
    out: list[RelationType] = []
    with no_grad():
        for i in range(0, len(queries), batch_size):
            qids = _pad([format_question(vocab, q.question).ids for q in queries[i:i + batch_size]])
            logits = model.type_logits(model.encode_batch(qids, qids == 0), qids != 0)
            out += [RelationType(int(k)) for k in logits.data.argmax(axis=-1)]
    return out


def predict_answers(model: EventQAModel, vocab: Vocab, queries: Sequence[Query],
                    types: Sequence[RelationType | None], cfg: RunConfig) -> list[list[str]]:
    setting = model.config.setting
    seqs = [format_input(setting, vocab, t, q.question, q.paragraph, cfg.max_len)
            for q, t in zip(queries, types)]
    preds: list[list[str]] = []
    bs = cfg.eval_batch_size
    with no_grad():
        for i in range(0, len(seqs), bs):
            chunk = seqs[i:i + bs]
            ids = _pad([s.ids for s in chunk])
            pad = ids == 0
            if setting == "generative":
                outs = model.generate_batch(ids, pad, vocab.special(BOS), vocab.special(EOS))
                preds += [split_answers(vocab.tokens(o)) for o in outs]
            else:
                logits = model.tag_logits(model.encode_batch(ids, pad)).data
                for k, s in enumerate(chunk):
                    para = np.asarray(s.positions("paragraph"), dtype=np.int64)
                    tags = logits[k, para].argmax(axis=-1)
                    preds.append(runs_to_answers(s, extract_runs(tags, model.config.tagging)))
    return preds


def evaluate(model: EventQAModel, vocab: Vocab, dataset: Sequence[QAInstance],
             cfg: RunConfig) -> MetricsReport:
    """Predict from (question, paragraph) only and score against gold.

    The relation-type prefix comes from the model's own classifier; when
    the classifier was ablated the gold type is used instead, with a
    warning.
    """
    model.eval()
    queries = queries_of(dataset)
    predicted_types = None
    if cfg.no_prefix:
        types: list[RelationType | None] = [None] * len(queries)
    elif cfg.no_tc:
        log.warning("type classifier ablated: falling back to GOLD relation-type prefixes for evaluation")
        types = [x.type for x in dataset]
    else:
        types = predict_types(model, vocab, queries, cfg.eval_batch_size)
        predicted_types = {q.id: t.label for q, t in zip(queries, types)}
    preds = predict_answers(model, vocab, queries, types, cfg)
    return build_report({q.id: p for q, p in zip(queries, preds)}, dataset, predicted_types)


# ---------------------------------------------------------------------------
# analysis


ROLES = ("question-event", "answer-event", "other-event", "non-event")


def event_vector_sets(model: EventQAModel, vocab: Vocab, dataset: Sequence[QAInstance],
                      cfg: RunConfig) -> list[EventVectorSets]:
    """Transformed gold-event vectors per instance (analysis only)."""
    out = []
    model.eval()
    with no_grad():
        for ex in (featurize(x, vocab, cfg) for x in dataset):
            if ex is None:
                continue
            h = model.encode(ex.seq)
            z = model.transform(h)
            ev = ex.events
            out.append(EventVectorSets(z[np.asarray(ev.question, dtype=np.int64)],
                                       z[np.asarray(ev.answer, dtype=np.int64)],
                                       z[np.asarray(ev.other, dtype=np.int64)]))
    return out


def contrastive_alignment(model: EventQAModel, vocab: Vocab, dataset: Sequence[QAInstance],
                          cfg: RunConfig) -> float:
    return alignment_gap(event_vector_sets(model, vocab, dataset, cfg))


@dataclass
class ProjectionRow:
    x: float
    y: float
    role: str
    instance_id: str
    token: str


def project_embeddings(model: EventQAModel, vocab: Vocab, sample: Sequence[QAInstance], cfg: RunConfig,
                       epoch_tag: str = "final", path: str | Path | None = None) -> list[ProjectionRow]:
    """2-D principal-component projection of transformed question and
    paragraph token vectors, labelled by gold event role."""
    if not sample:
        raise ValueError("empty sample")
    vecs, meta = [], []
    model.eval()
    with no_grad():
        for ex in (featurize(x, vocab, cfg) for x in sample):
            if ex is None:
                continue
            z = model.transform(model.encode(ex.seq)).data
            role_of = {i: ROLES[0] for i in ex.events.question}
            role_of.update({i: ROLES[1] for i in ex.events.answer})
            role_of.update({i: ROLES[2] for i in ex.events.other})
            for i, seg in enumerate(ex.seq.segments):
                if seg in ("question", "paragraph"):
                    vecs.append(z[i])
                    meta.append((role_of.get(i, ROLES[3]), ex.instance.id, ex.seq.tokens[i]))
    if not vecs:
        raise ValueError("no usable instances in sample")
    x = np.asarray(vecs, dtype=np.float64)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    coords = x @ vt[:2].T
    if coords.shape[1] < 2:
        coords = np.pad(coords, ((0, 0), (0, 2 - coords.shape[1])))
    rows = [ProjectionRow(float(c[0]), float(c[1]), r, i, t) for c, (r, i, t) in zip(coords, meta)]
    if path is not None:
        write_projection(rows, path, epoch_tag)
    return rows


def write_projection(rows: Sequence[ProjectionRow], path: str | Path, epoch_tag: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x\ty\trole\tinstance_id\ttoken\tepoch\n")
        for r in rows:
            fh.write(f"{r.x:.6f}\t{r.y:.6f}\t{r.role}\t{r.instance_id}\t{r.token}\t{epoch_tag}\n")


def read_projection(path: str | Path) -> list[ProjectionRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            x, y, role, inst, tok, _ = line.rstrip("\n").split("\t")
            rows.append(ProjectionRow(float(x), float(y), role, inst, tok))
    return rows


def role_distances(rows: Sequence[ProjectionRow]) -> tuple[float, float]:
    """Mean within-instance distance from question events to answer events
    and to other events, in projected coordinates."""
    by_inst: dict[str, dict[str, list[np.ndarray]]] = {}
    for r in rows:
        by_inst.setdefault(r.instance_id, {}).setdefault(r.role, []).append(np.array([r.x, r.y]))
    qa, qo = [], []
    for roles in by_inst.values():
        for q in roles.get(ROLES[0], []):
            qa += [np.linalg.norm(q - a) for a in roles.get(ROLES[1], [])]
            qo += [np.linalg.norm(q - o) for o in roles.get(ROLES[2], [])]
    return float(np.mean(qa)), float(np.mean(qo))


# ---------------------------------------------------------------------------
# few-shot sweep


@dataclass
class SweepRow:
    size: int
    f1t: float
    hit1: float
    em: float
    seconds: float
    report: MetricsReport | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"size": self.size, "f1t": self.f1t, "hit1": self.hit1, "em": self.em, "seconds": self.seconds}


def fewshot_sweep(cfg: RunConfig, train_set: Sequence[QAInstance], eval_set: Sequence[QAInstance],
                  sizes: Sequence[int], out_dir: str | Path | None = None) -> list[SweepRow]:
    """One model per size on nested stratified subsets; size 0 is the
    untrained model."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be sorted")
    vocab = build_vocab(corpus_texts(train_set), cfg.min_count)
    rows = []
    for n in sizes:
        subset = few_shot_subset(list(train_set), n, cfg.seed)
        start = time.perf_counter()
        if n == 0:
            model = new_model(cfg, vocab)
            model.eval()
        else:
            model = train(cfg, subset, vocab).model
        report = evaluate(model, vocab, eval_set, cfg)
        o = report.overall
        rows.append(SweepRow(n, o["f1t"], o["hit1"], o["em"], time.perf_counter() - start, report))
        log.info("sweep size %d: F1T %.3f", n, o["f1t"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_table(rows, out / "sweep.json")
    return rows


def write_sweep_table(rows: Sequence[SweepRow], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_json() for r in rows], indent=2))


def read_sweep_table(path: str | Path) -> list[SweepRow]:
    return [SweepRow(**obj) for obj in json.loads(Path(path).read_text())]
