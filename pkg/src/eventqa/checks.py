"""Property suites behind `eventqa check`: gradient checks of every loss,
the Gaussian entropy / mutual-information properties of the event map,
invertibility, and loss spot values."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import RelationType
from .gradcheck import grad_check
from .model import EventQAModel
from .objectives import (
    EventVectorSets,
    batch_contrastive_loss,
    contrastive_loss,
    extractive_qa_loss,
    type_loss,
)
from .synth import synth_generate
from .text import build_vocab
from .training import RunConfig, _pad, batch_losses, corpus_texts, featurize
from .transform import (
    EventTransform,
    PropertyReport,
    check_property1,
    check_property1_monte_carlo,
    check_property2,
    gaussian_mutual_information,
)

LOSS_PARTS = ("qa_generative", "qa_extractive", "tc", "cl", "total")


def _tiny(setting: str, seed: int) -> RunConfig:
    return RunConfig(setting=setting, layers=1, heads=2, d=8, ff=12, max_len=192, dropout=0.0,
                     seed=seed, k_neg=2)


def _model(cfg: RunConfig, vocab) -> EventQAModel:
    mc = dataclasses.replace(cfg.model_config(len(vocab)), dtype="float64")
    return EventQAModel(mc)


def _loss_fn(part: str, model: EventQAModel, vocab, ex, cfg: RunConfig):
    def f() -> Tensor:
        rng = np.random.default_rng(cfg.seed)
        if part.startswith("qa"):
            c = dataclasses.replace(cfg, no_tc=True, no_cl=True)
            return batch_losses(model, vocab, [ex], c, rng).total
        if part == "tc":
            ids = _pad([ex.question_ids])
            hq = model.encode_batch(ids, ids == 0)
            return type_loss(model.type_logits(hq, ids != 0), [int(ex.instance.type)])
        if part == "cl":
            h = model.encode_batch(np.asarray([ex.seq.ids]))
            flat = ag.reshape(h, (h.shape[1], h.shape[2]))
            return batch_contrastive_loss(flat, [ex.events], model.transform, cfg.tau, cfg.k_neg, rng)[0]
        return batch_losses(model, vocab, [ex], cfg, rng).total
    return f


def gradient_suite(n_instances: int = 20, seed: int = 0, tol: float = 1e-4,
                   max_entries: int = 3) -> list:
    """grad_check of each loss part on `n_instances` seeded synthetic
    instances, each with a freshly initialised float64 model."""
    data = synth_generate(n_instances, seed=seed)
    vocab = build_vocab(corpus_texts(data))
    reports = []
    for i, inst in enumerate(data):
        for part in LOSS_PARTS:
            setting = "extractive" if part == "qa_extractive" else "generative"
            cfg = _tiny(setting, seed + i)
            model = _model(cfg, vocab).train()
            ex = featurize(inst, vocab, cfg)
            rep = grad_check(_loss_fn(part, model, vocab, ex, cfg), list(model.params.values()),
                             tol=tol, max_entries=max_entries, seed=i, name=f"{part}/{inst.id}")
            reports.append(rep)
    return reports


def _random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def _random_map(rng: np.random.Generator, d: int) -> np.ndarray:
    while True:
        m = rng.standard_normal((d, d))
        if np.linalg.cond(m) < 1e6:
            return m


def property1_suite(n_cases: int = 100, seed: int = 0, dims=(2, 4, 8), tol: float = 1e-9) -> list[PropertyReport]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_cases):
        d = dims[k % len(dims)]
        out.append(check_property1(_random_map(rng, d), rng.standard_normal(d), _random_spd(rng, d), tol))
    return out


def property1_mc_suite(n_cases: int = 5, seed: int = 0, dims=(2, 3), n_samples: int = 200_000,
                       tol: float = 0.05) -> list[PropertyReport]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_cases):
        d = dims[k % len(dims)]
        out.append(check_property1_monte_carlo(_random_map(rng, d), rng.standard_normal(d), _random_spd(rng, d),
                                               n_samples=n_samples, seed=seed + k, tol=tol))
    return out


def property2_suite(n_cases: int = 100, seed: int = 0, dims=(1, 2, 4), tol: float = 1e-9) -> list[PropertyReport]:
    rng = np.random.default_rng(seed)
    joint = np.array([[1.0, 0.5], [0.5, 1.0]])
    scalar = check_property2([[rng.standard_normal() + 2.0]], [0.3], joint, tol)
    out = [scalar, PropertyReport("scalar_pair_mi", 0.1438, gaussian_mutual_information(joint, 1), 1e-4)]
    for k in range(n_cases):
        d = dims[k % len(dims)]
        out.append(check_property2(_random_map(rng, d), rng.standard_normal(d), _random_spd(rng, 2 * d), tol))
    return out


def invertibility_suite(n_vectors: int = 10_000, n_inits: int = 1000, d: int = 64, seed: int = 0,
                        dtype=np.float64) -> list[PropertyReport]:
    rng = np.random.default_rng(seed)
    tr = EventTransform(d, rng, dtype=dtype)
    e = rng.standard_normal((n_vectors, d)).astype(dtype)
    err = float(np.abs(tr.invert(tr(Tensor(e))) - e).max())
    nonzero = sum(EventTransform(d, np.random.default_rng(s)).det() != 0.0 for s in range(n_inits))
    return [PropertyReport("round_trip_max_abs_error", 0.0, err, 1e-6),
            PropertyReport("initialisations_with_nonzero_det", float(n_inits), float(nonzero), 0.0)]


def loss_spot_values() -> list[PropertyReport]:
    t = lambda x: Tensor(np.asarray(x, dtype=np.float64))  # noqa: E731
    sets = EventVectorSets(t([[1.0, 0.0]]), t([[1.0, 0.0]]), t([[0.0, 1.0], [0.0, 1.0]]))
    cl = contrastive_loss(sets, tau=1.0, k_neg=2).terms[0]
    tc = float(type_loss(t(np.zeros((1, len(RelationType)))), [0]).data)
    ex = float(extractive_qa_loss(t(np.zeros((3, 2))), np.array([0, 1, 0]), 4.0).data)
    return [PropertyReport("contrastive_example", 0.5514, float(cl), 1e-4),
            PropertyReport("uniform_type_loss", math.log(5), tc, 1e-9),
            PropertyReport("weighted_extractive_example", math.log(2), ex, 1e-9)]


def run_all(quick: bool = False) -> dict[str, list]:
    """Every suite; `quick` shrinks the sample counts for a smoke run."""
    if quick:
        return {
            "gradients": gradient_suite(n_instances=2),
            "property1": property1_suite(n_cases=9),
            "property1_monte_carlo": property1_mc_suite(n_cases=1, n_samples=20_000, tol=0.1),
            "property2": property2_suite(n_cases=9),
            "invertibility": invertibility_suite(n_vectors=500, n_inits=20),
            "loss_spot_values": loss_spot_values(),
        }
    return {
        "gradients": gradient_suite(),
        "property1": property1_suite(),
        "property1_monte_carlo": property1_mc_suite(),
        "property2": property2_suite(),
        "invertibility": invertibility_suite(),
        "loss_spot_values": loss_spot_values(),
    }
