import json

import numpy as np
import pytest

from eventqa import training
from eventqa.data import RelationType
from eventqa.model import split_answers
from eventqa.synth import synth_generate
from eventqa.text import format_generative
from eventqa.training import (
    ROLES,
    Query,
    RunConfig,
    RunConfigError,
    evaluate,
    featurize,
    fewshot_sweep,
    load_run,
    project_embeddings,
    read_projection,
    read_sweep_table,
    train,
)


def tiny(setting="extractive", **kw):
    base = dict(setting=setting, layers=1, d=16, heads=2, ff=32, dropout=0.0, batch_size=8,
                accum_steps=1, epochs=1, lr=3e-3)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def corpus():
    return synth_generate(40, seed=5)


def test_config_defaults_follow_reference_hyperparameters():
    cfg = RunConfig()
    assert (cfg.tau, cfg.lambda_tc, cfg.lambda_cl) == (1.0, 0.1, 0.1)
    assert (cfg.beta1, cfg.beta2, cfg.eps, cfg.warmup) == (0.9, 0.999, 1e-6, 0.1)
    assert (cfg.batch_size, cfg.accum_steps) == (2, 3)
    assert (RunConfig(setting="extractive").batch_size, RunConfig(setting="extractive").accum_steps) == (8, 2)


def test_config_round_trip_and_unknown_keys(tmp_path):
    cfg = tiny(no_cl=True, no_prefix=True)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_json()))
    assert RunConfig.load(path) == cfg
    with pytest.raises(RunConfigError):
        RunConfig.from_json({"temperature": 1.0})


def test_invalid_config_fails_before_compute(corpus, monkeypatch):
    monkeypatch.setattr(training, "featurize", lambda *a: pytest.fail("compute started"))
    with pytest.raises(RunConfigError):
        train(tiny(tau=0.0), corpus)
    with pytest.raises(Exception):
        train(tiny(heads=3), corpus)


def test_featurize_partitions_events(corpus):
    cfg = tiny()
    from eventqa.text import build_vocab
    vocab = build_vocab(training.corpus_texts(corpus))
    ex = featurize(corpus[0], vocab, cfg)
    ex.events.check()
    assert ex.events.question and ex.events.answer and ex.events.other
    assert all(ex.seq.segments[i] == "question" for i in ex.events.question)
    assert sum(t > 0 for t in ex.tags) >= len(corpus[0].answers)


@pytest.mark.parametrize("setting", ["generative", "extractive"])
def test_one_epoch_writes_artifacts(tmp_path, corpus, setting):
    res = train(tiny(setting), corpus[:16], out_dir=tmp_path)
    assert len(res.log) == 2
    for name in ("model.npz", "loss_log.jsonl", "transform_report.json"):
        assert (tmp_path / name).exists()
    report = json.loads((tmp_path / "transform_report.json").read_text())
    assert report["transform"]["det"] != 0.0
    lines = (tmp_path / "loss_log.jsonl").read_text().splitlines()
    assert set(json.loads(lines[0])) == {"step", "epoch", "lr", "L", "L_qa", "L_tc", "L_cl"}
    model, vocab, cfg = load_run(tmp_path / "model.npz")
    assert cfg.setting == setting and len(vocab) == len(res.vocab)


def test_same_seed_same_loss(corpus):
    a = train(tiny(epochs=2), corpus[:16]).final_loss
    b = train(tiny(epochs=2), corpus[:16]).final_loss
    assert abs(a - b) <= 1e-12


@pytest.mark.parametrize("setting", ["generative", "extractive"])
def test_overfit_one_batch(setting):
    data = synth_generate(8, seed=0)
    cfg = tiny(setting, d=32, ff=64, batch_size=4, epochs=100, weight_decay=0.0)
    res = train(cfg, data, overfit_batch=True)
    assert len(res.log) == 200
    assert res.log[-1]["L_qa"] < 0.05 and res.log[-1]["L"] < 0.05
    if setting == "generative":
        inst = data[0]
        seq = format_generative(res.vocab, inst.type, inst.question, inst.paragraph)
        got = split_answers(res.model.generate(seq, res.vocab))
        assert got == [" ".join(t.lower().split()) for t in inst.answer_texts]


def test_ablation_flags_combine(corpus):
    for flags in ({"no_prefix": True}, {"no_tc": True}, {"no_cl": True}, {"no_transm": True},
                  {"no_prefix": True, "no_tc": True, "no_cl": True, "no_transm": True}):
        res = train(tiny(**flags), corpus[:8])
        last = res.log[-1]
        if flags.get("no_cl"):
            assert last["L_cl"] == 0.0
        if flags.get("no_tc"):
            assert last["L_tc"] == 0.0
        if flags.get("no_transm"):
            assert "transform.M" not in res.model.params


def test_evaluate_with_gold_stub(corpus, monkeypatch):
    res = train(tiny(epochs=0), corpus[:8])
    gold = {x.id: x.answer_texts for x in corpus}

    def stub(model, vocab, queries, types, cfg):
        assert all(type(q) is Query for q in queries)
        return [gold[q.id] for q in queries]

    monkeypatch.setattr(training, "predict_answers", stub)
    rep = evaluate(res.model, res.vocab, corpus, tiny())
    assert rep.overall["f1t"] == rep.overall["hit1"] == rep.overall["em"] == 1.0
    n = sum(v["n"] for v in rep.per_type.values())
    assert n == len(corpus)
    assert rep.overall["f1t"] == pytest.approx(sum(v["f1t"] * v["n"] for v in rep.per_type.values()) / n)


def test_query_withholds_gold():
    assert set(Query.__dataclass_fields__) == {"id", "question", "paragraph"}


def test_no_prefix_skips_type_prediction(corpus, monkeypatch):
    res = train(tiny(epochs=0, no_prefix=True), corpus[:8])
    monkeypatch.setattr(training, "predict_types", lambda *a, **k: pytest.fail("type predicted"))
    rep = evaluate(res.model, res.vocab, corpus[:5], tiny(no_prefix=True))
    assert rep.type_accuracy is None


def test_no_tc_falls_back_to_gold_with_warning(corpus, caplog):
    res = train(tiny(epochs=0), corpus[:8])
    rep = evaluate(res.model, res.vocab, corpus[:5], tiny(no_tc=True))
    assert "GOLD" in caplog.text and rep.type_accuracy is None


def test_projection(tmp_path, corpus):
    cfg = tiny()
    res = train(cfg, corpus[:16])
    sample = corpus[:4]
    rows = project_embeddings(res.model, res.vocab, sample, cfg, "e1", tmp_path / "p.tsv")
    n_tokens = sum(len(featurize(x, res.vocab, cfg).seq.positions("question"))
                   + len(featurize(x, res.vocab, cfg).seq.positions("paragraph")) for x in sample)
    assert len(rows) == n_tokens
    assert {r.role for r in rows} == set(ROLES)
    back = read_projection(tmp_path / "p.tsv")
    assert len(back) == len(rows) and back[0].role == rows[0].role
    with pytest.raises(ValueError):
        project_embeddings(res.model, res.vocab, [], cfg)


def test_sweep_two_sizes(tmp_path, corpus):
    rows = fewshot_sweep(tiny(), corpus[:30], corpus[30:], [0, 20], out_dir=tmp_path)
    assert [r.size for r in rows] == [0, 20]
    assert rows[0].report is not None and rows[1].report is not None
    back = read_sweep_table(tmp_path / "sweep.json")
    assert [r.to_json() for r in back] == [r.to_json() for r in rows]
    with pytest.raises(ValueError):
        fewshot_sweep(tiny(), corpus[:30], corpus[30:], [20, 0])


def test_gradient_accumulation_matches_big_batch(corpus):
    a = train(tiny(batch_size=8, accum_steps=1, epochs=1, no_cl=True), corpus[:8])
    b = train(tiny(batch_size=4, accum_steps=2, epochs=1, no_cl=True), corpus[:8])
    assert len(a.log) == len(b.log) == 1
    for k, p in a.model.params.items():
        np.testing.assert_allclose(p.data, b.model.params[k].data, atol=1e-5)


def test_types_are_predicted_when_prefix_on(corpus):
    res = train(tiny(epochs=0), corpus[:8])
    rep = evaluate(res.model, res.vocab, corpus[:5], tiny())
    assert rep.type_accuracy is not None
    assert all(RelationType.parse(q.predicted_type) is not None for q in rep.per_question)
