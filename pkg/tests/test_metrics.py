import json
import random
from collections import defaultdict

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from eventqa.data import Answer, EventSpan, QAInstance, RelationType
from eventqa.metrics import build_report, exact_match, f1_token, hit_at_1

WORDS = ["a", "b", "c", "d", "storm", "flood", "the"]
answers = st.lists(st.lists(st.sampled_from(WORDS + [",", "."]), min_size=0, max_size=4).map(" ".join),
                   min_size=0, max_size=3)


def test_f1_examples():
    assert f1_token(["a b c"], ["a b c"]) == 1.0
    assert f1_token(["a b d"], ["a b c"]) == pytest.approx(2 / 3)
    assert f1_token([], ["a"]) == 0.0


def test_hit_examples():
    assert hit_at_1("through dna testing", ["testing"]) == 1
    assert hit_at_1("", ["testing"]) == 0
    assert hit_at_1("the storm came", ["flood", "rain"]) == 0


def test_em_examples():
    assert exact_match(["a b"], ["a b", "c"]) == 1
    assert exact_match(["a  B "], ["a b"]) == 1
    assert exact_match(["a"], ["a b"]) == 0


def _random_case(rng):
    def phrase():
        return " ".join(rng.choice(WORDS + [",", "."]) for _ in range(rng.randint(1, 4)))
    pred = [phrase() for _ in range(rng.randint(0, 3))]
    gold = [phrase() for _ in range(rng.randint(1, 3))]
    return pred, gold


@pytest.mark.parametrize("seed", range(50))
def test_against_brute_force(seed):
    rng = random.Random(seed)
    pred, gold = _random_case(rng)
    triggers = [rng.choice(WORDS) for _ in range(2)]
    assert f1_token(pred, gold) == pytest.approx(oracles.f1(pred, gold), abs=1e-12)
    assert exact_match(pred, gold) == oracles.em(pred, gold)
    left = pred[0] if pred else ""
    assert hit_at_1(left, triggers) == oracles.hit(left, triggers)


@given(answers, answers.filter(bool))
def test_f1_symmetric_and_bounded(pred, gold):
    v = f1_token(pred, gold)
    assert 0.0 <= v <= 1.0
    if pred:
        assert v == pytest.approx(f1_token(gold, pred))


@given(answers, answers.filter(bool), st.sampled_from(WORDS))
def test_extra_answers_never_hurt(pred, gold, extra):
    assert exact_match(pred + [extra], gold) >= exact_match(pred, gold)
    if pred:
        assert hit_at_1((pred + [extra])[0], ["storm"]) == hit_at_1(pred[0], ["storm"])


def _inst(i, t, answer="the storm"):
    p = f"{answer} came."
    return QAInstance(f"q{i}", p, "What caused it?", t, [Answer(answer, 0, len(answer))],
                      [EventSpan(5, 11, "caused")], [EventSpan(4, len(answer), answer[4:])], [])


def test_report_perfect_single():
    inst = _inst(0, RelationType.CAUSAL)
    rep = build_report({"q0": ["the storm"]}, [inst])
    assert rep.overall == {"f1t": 1.0, "hit1": 1.0, "em": 1.0, "n": 1}


def test_report_two_questions_half():
    data = [_inst(0, RelationType.CAUSAL), _inst(1, RelationType.CAUSAL)]
    rep = build_report({"q0": ["the storm"], "q1": ["nothing"]}, data)
    assert rep.overall["f1t"] == 0.5 and rep.overall["em"] == 0.5


def test_report_id_mismatch():
    with pytest.raises(ValueError):
        build_report({"zz": []}, [_inst(0, RelationType.CAUSAL)])


def test_report_regrouping_oracle():
    rng = random.Random(0)
    data, preds = [], {}
    for i in range(40):
        t = RelationType(rng.randrange(5))
        data.append(_inst(i, t))
        preds[f"q{i}"] = rng.choice([["the storm"], ["storm"], ["a flood"], [], ["the storm", "x"]])
    rep = build_report(preds, data)
    groups = defaultdict(list)
    for row in json.loads(rep.dumps())["per_question"]:
        groups[row["type"]].append(row)
    for label, rows in groups.items():
        for m in ("f1t", "hit1", "em"):
            assert rep.per_type[label][m] == pytest.approx(sum(r[m] for r in rows) / len(rows), abs=1e-15)
    weighted = sum(rep.per_type[k]["f1t"] * rep.per_type[k]["n"] for k in rep.per_type) / len(data)
    assert rep.overall["f1t"] == pytest.approx(weighted, abs=1e-12)
    for row in rep.per_question:
        assert 0 <= row.f1t <= 1
