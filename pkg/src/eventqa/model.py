"""Small pre-LN transformer: encoder-decoder for answer generation, or
encoder plus a token tagging head for answer extraction. Both variants
carry the event transform and the relation-type head."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .data import RelationType
from .text import EOS, SEP, AlignedSequence, LengthError, Vocab
from .transform import EventTransform, IdentityTransform

NEG_INF = -1e9


class ModeError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


TAG_LABELS = {"io": ("O", "I"), "bio": ("O", "B", "I")}


@dataclass
class ModelConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    d: int = 64
    ff: int = 128
    max_len: int = 192
    max_answer_len: int = 40
    dropout: float = 0.1
    seed: int = 0
    setting: str = "generative"
    tagging: str = "io"
    dtype: str = "float32"
    use_transform: bool = True
    n_types: int = len(RelationType)

    def validate(self) -> None:
        if self.d % self.heads:
            raise ConfigError(f"width {self.d} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.setting not in ("generative", "extractive"):
            raise ConfigError(f"unknown setting {self.setting!r}")
        if self.tagging not in TAG_LABELS:
            raise ConfigError(f"unknown tagging scheme {self.tagging!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        if min(self.layers, self.heads, self.d, self.ff, self.vocab_size, self.max_len) < 1:
            raise ConfigError("sizes must be positive")

    @property
    def n_labels(self) -> int:
        return len(TAG_LABELS[self.tagging])


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class EventQAModel:
    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.training = False
        self.rng = np.random.default_rng(config.seed + 1)
        init = np.random.default_rng(config.seed)
        self.params: dict[str, Tensor] = {}
        self._build(init)
        self._pos = sinusoidal_positions(config.max_len + config.max_answer_len + 2, config.d).astype(self.dtype)

    # -- parameters ---------------------------------------------------------

    def _new(self, name: str, arr: np.ndarray) -> Tensor:
        t = Tensor(arr.astype(self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _dense(self, rng, name: str, n_in: int, n_out: int) -> None:
        self._new(f"{name}.w", rng.standard_normal((n_in, n_out)) / math.sqrt(n_in))
        self._new(f"{name}.b", np.zeros(n_out))

    def _norm(self, name: str, d: int) -> None:
        self._new(f"{name}.g", np.ones(d))
        self._new(f"{name}.b", np.zeros(d))

    def _build(self, rng: np.random.Generator) -> None:
        c = self.config
        self._new("embed", rng.standard_normal((c.vocab_size, c.d)) / math.sqrt(c.d))
        for l in range(c.layers):
            p = f"enc.{l}"
            self._norm(f"{p}.ln1", c.d)
            self._dense(rng, f"{p}.attn.qkv", c.d, 3 * c.d)
            self._dense(rng, f"{p}.attn.out", c.d, c.d)
            self._norm(f"{p}.ln2", c.d)
            self._dense(rng, f"{p}.ff1", c.d, c.ff)
            self._dense(rng, f"{p}.ff2", c.ff, c.d)
        self._norm("enc.ln_f", c.d)
        if c.setting == "generative":
            for l in range(c.layers):
                p = f"dec.{l}"
                self._norm(f"{p}.ln1", c.d)
                self._dense(rng, f"{p}.self.qkv", c.d, 3 * c.d)
                self._dense(rng, f"{p}.self.out", c.d, c.d)
                self._norm(f"{p}.ln2", c.d)
                self._dense(rng, f"{p}.cross.q", c.d, c.d)
                self._dense(rng, f"{p}.cross.kv", c.d, 2 * c.d)
                self._dense(rng, f"{p}.cross.out", c.d, c.d)
                self._norm(f"{p}.ln3", c.d)
                self._dense(rng, f"{p}.ff1", c.d, c.ff)
                self._dense(rng, f"{p}.ff2", c.ff, c.d)
            self._norm("dec.ln_f", c.d)
        else:
            self._dense(rng, "tag", c.d, c.n_labels)
        self._dense(rng, "type", c.d, c.n_types)
        if c.use_transform:
            self.transform = EventTransform(c.d, rng, dtype=self.dtype)
            self.params.update(self.transform.parameters())
        else:
            self.transform = IdentityTransform(c.d)

    def no_decay_names(self) -> set[str]:
        return {n for n in self.params if n.endswith(".b") or n.endswith(".g")}

    def train(self, mode: bool = True) -> "EventQAModel":
        self.training = mode
        return self

    def eval(self) -> "EventQAModel":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- building blocks ----------------------------------------------------

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return ag.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _ln(self, x: Tensor, name: str) -> Tensor:
        return ag.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _drop(self, x: Tensor) -> Tensor:
        return ag.dropout(x, self.config.dropout, self.rng, self.training)

    def _split_heads(self, x: Tensor, b: int, n: int) -> Tensor:
        h = self.config.heads
        return ag.transpose(ag.reshape(x, (b, n, h, self.config.d // h)), (0, 2, 1, 3))

    def _merge_heads(self, x: Tensor, b: int, n: int) -> Tensor:
        return ag.reshape(ag.transpose(x, (0, 2, 1, 3)), (b, n, self.config.d))

    def _attend(self, q: Tensor, k: Tensor, v: Tensor, mask_add: np.ndarray, b: int, nq: int, nk: int) -> Tensor:
        dh = self.config.d // self.config.heads
        qh, kh, vh = self._split_heads(q, b, nq), self._split_heads(k, b, nk), self._split_heads(v, b, nk)
        scores = ag.scale(ag.matmul(qh, ag.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        attn = self._drop(ag.softmax(scores, axis=-1, mask_add=mask_add))
        return self._merge_heads(ag.matmul(attn, vh), b, nq)

    def _self_attention(self, x: Tensor, name: str, mask_add: np.ndarray) -> Tensor:
        b, n, d = x.shape
        qkv = self._linear(x, f"{name}.qkv")
        q, k, v = qkv[:, :, :d], qkv[:, :, d:2 * d], qkv[:, :, 2 * d:]
        return self._linear(self._attend(q, k, v, mask_add, b, n, n), f"{name}.out")

    def _cross_attention(self, x: Tensor, memory: Tensor, name: str, mask_add: np.ndarray) -> Tensor:
        b, n, d = x.shape
        nk = memory.shape[1]
        q = self._linear(x, f"{name}.q")
        kv = self._linear(memory, f"{name}.kv")
        k, v = kv[:, :, :d], kv[:, :, d:]
        return self._linear(self._attend(q, k, v, mask_add, b, n, nk), f"{name}.out")

    def _ffn(self, x: Tensor, name: str) -> Tensor:
        return self._linear(self._drop(ag.relu(self._linear(x, f"{name}.ff1"))), f"{name}.ff2")

    def _embed(self, ids: np.ndarray) -> Tensor:
        n = ids.shape[1]
        x = ag.scale(ag.embedding(self.params["embed"], ids), math.sqrt(self.config.d))
        return self._drop(x + Tensor(self._pos[:n]))

    def _key_mask(self, pad: np.ndarray) -> np.ndarray:
        return np.where(pad, NEG_INF, 0.0).astype(self.dtype)[:, None, None, :]

    # -- encoder ------------------------------------------------------------

    def encode_batch(self, ids: np.ndarray, pad: np.ndarray | None = None) -> Tensor:
        """ids: (B, N) int array; pad: (B, N) bool, True at padding.
        Returns H with shape (B, N, d)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ag.ShapeError("encode_batch expects a (batch, length) id array")
        if ids.shape[1] > self.config.max_len:
            raise LengthError(f"input of {ids.shape[1]} tokens exceeds max_len {self.config.max_len}")
        if pad is None:
            pad = np.zeros(ids.shape, dtype=bool)
        mask = self._key_mask(pad)
        x = self._embed(ids)
        for l in range(self.config.layers):
            p = f"enc.{l}"
            x = x + self._drop(self._self_attention(self._ln(x, f"{p}.ln1"), f"{p}.attn", mask))
            x = x + self._drop(self._ffn(self._ln(x, f"{p}.ln2"), p))
        return self._ln(x, "enc.ln_f")

    def encode(self, seq: AlignedSequence | Sequence[int]) -> Tensor:
        ids = seq.ids if isinstance(seq, AlignedSequence) else list(seq)
        if max(ids, default=0) >= self.config.vocab_size:
            raise ag.ShapeError("token id beyond vocabulary size")
        return self.encode_batch(np.asarray([ids]))[0]

    # -- decoder ------------------------------------------------------------

    def decoder_logits(self, memory: Tensor, mem_pad: np.ndarray, dec_ids: np.ndarray) -> Tensor:
        """Teacher-forced next-token logits, (B, L, V)."""
        self._require("generative")
        b, n = dec_ids.shape
        causal = np.triu(np.full((n, n), NEG_INF, dtype=self.dtype), k=1)[None, None]
        dec_pad = self._key_mask(dec_ids == 0)
        self_mask = causal + dec_pad
        cross_mask = self._key_mask(mem_pad)
        x = self._embed(dec_ids)
        for l in range(self.config.layers):
            p = f"dec.{l}"
            x = x + self._drop(self._self_attention(self._ln(x, f"{p}.ln1"), f"{p}.self", self_mask))
            x = x + self._drop(self._cross_attention(self._ln(x, f"{p}.ln2"), memory, f"{p}.cross", cross_mask))
            x = x + self._drop(self._ffn(self._ln(x, f"{p}.ln3"), p))
        h = self._ln(x, "dec.ln_f")
        return ag.matmul(h, ag.transpose(self.params["embed"]))

    def generate_batch(self, ids: np.ndarray, pad: np.ndarray, bos_id: int, eos_id: int,
                       max_answer_len: int | None = None) -> list[list[int]]:
        """Greedy decoding; returned id lists exclude the end token."""
        self._require("generative")
        max_answer_len = max_answer_len or self.config.max_answer_len
        b = ids.shape[0]
        with no_grad():
            memory = self.encode_batch(ids, pad)
            out = np.full((b, 1), bos_id, dtype=np.int64)
            done = np.zeros(b, dtype=bool)
            for _ in range(max_answer_len):
                logits = self.decoder_logits(memory, pad, out).data[:, -1, :]
                nxt = logits.argmax(axis=-1)
                nxt = np.where(done, 0, nxt)
                out = np.concatenate([out, nxt[:, None]], axis=1)
                done |= nxt == eos_id
                if done.all():
                    break
        results = []
        for row in out[:, 1:]:
            seq = []
            for tok in row.tolist():
                if tok in (eos_id, 0):
                    break
                seq.append(tok)
            results.append(seq)
        return results

    def generate(self, seq: AlignedSequence, vocab: Vocab, max_answer_len: int | None = None) -> list[str]:
        self._require("generative")
        ids = np.asarray([seq.ids])
        out = self.generate_batch(ids, np.zeros(ids.shape, bool), vocab.special("<s>"), vocab.special(EOS),
                                  max_answer_len)[0]
        return vocab.tokens(out)

    # -- tagging ------------------------------------------------------------

    def tag_logits(self, h: Tensor) -> Tensor:
        self._require("extractive")
        return self._linear(h, "tag")

    def tag_tokens(self, seq: AlignedSequence) -> Tensor:
        """Label logits for the paragraph tokens only, (n_paragraph, n_labels)."""
        self._require("extractive")
        h = self.encode(seq)
        return self.tag_logits(h)[np.asarray(seq.positions("paragraph"), dtype=np.int64)]

    # -- relation type head -------------------------------------------------

    def type_logits(self, hq: Tensor, mask: np.ndarray) -> Tensor:
        """Mean-pool transformed question vectors, then a dense layer.
        hq: (B, N, d); mask: (B, N) True on question tokens."""
        z = self.transform(hq)
        w = mask.astype(self.dtype)
        counts = w.sum(axis=1, keepdims=True)
        if np.any(counts == 0):
            raise ValueError("question without tokens")
        pooled = ag.sum_(z * Tensor((w / counts)[:, :, None]), axis=1)
        return self._linear(pooled, "type")

    def _require(self, setting: str) -> None:
        if self.config.setting != setting:
            raise ModeError(f"operation needs a {setting} model, this one is {self.config.setting}")

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path, vocab: Vocab | None = None, extra: dict | None = None) -> None:
        meta = {"config": asdict(self.config), "vocab": vocab.itos if vocab else None, "extra": extra or {}}
        arrays = {f"param/{k}": v.data for k, v in self.params.items()}
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> tuple["EventQAModel", Vocab | None, dict]:
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode("utf-8"))
            model = cls(ModelConfig(**meta["config"]))
            for name, t in model.params.items():
                arr = z[f"param/{name}"]
                if arr.shape != t.shape or arr.dtype != t.dtype:
                    raise ValueError(f"checkpoint parameter {name} does not match the model")
                t.data = arr.copy()
        vocab = Vocab(meta["vocab"]) if meta["vocab"] else None
        return model, vocab, meta.get("extra", {})


def extract_runs(tags: Sequence[int], scheme: str = "io") -> list[tuple[int, int]]:
    """Inclusive (start, end) index runs of answer tags.

    io: maximal runs of I (label 1). bio: B (1) opens a run, I (2) extends
    it; an I directly after O also opens one.
    """
    runs: list[tuple[int, int]] = []
    start = None
    for i, tag in enumerate(tags):
        tag = int(tag)
        opens = tag == 1 if scheme == "bio" else False
        inside = tag != 0
        if start is not None and (not inside or opens):
            runs.append((start, i - 1))
            start = None
        if inside and start is None:
            start = i
    if start is not None:
        runs.append((start, len(tags) - 1))
    return runs


def runs_to_answers(seq: AlignedSequence, runs: Sequence[tuple[int, int]]) -> list[str]:
    """Map runs over paragraph-token indices back to verbatim paragraph text."""
    para = seq.positions("paragraph")
    out = []
    for a, b in runs:
        start = seq.spans[para[a]][0]
        end = seq.spans[para[b]][1]
        out.append(seq.paragraph[start:end])
    return out


def split_answers(tokens: Sequence[str]) -> list[str]:
    """Split generated tokens on the answer separator; empty pieces dropped."""
    answers, cur = [], []
    for tok in tokens:
        if tok == SEP:
            if cur:
                answers.append(" ".join(cur))
            cur = []
        else:
            cur.append(tok)
    if cur:
        answers.append(" ".join(cur))
    return answers
