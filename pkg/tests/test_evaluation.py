import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import accuracy_score, f1_score

from ctxdbn.baselines import fit_ngram
from ctxdbn.dbn import init_model, predict_next_event
from ctxdbn.errors import ConfigError
from ctxdbn.eventlog import Roles, encode_log
from ctxdbn.evaluation import NO_PREDICTION, SYMPTOM, classification_report, evaluate_model

from .test_eventlog import make_log


def test_small_example():
    r = classification_report([0, 1, 1], [0, 0, 1])
    assert r.accuracy == pytest.approx(2 / 3)
    f1 = {c.label: c.f1 for c in r.per_class}
    assert f1 == pytest.approx({"0": 2 / 3, "1": 2 / 3})
    assert r.macro_f1 == pytest.approx(2 / 3)
    assert r.confusion == {"0": {"0": 1}, "1": {"0": 1, "1": 1}}


def test_perfect_predictor():
    r = classification_report([0, 2, 1, 2], [0, 2, 1, 2])
    assert r.accuracy == r.macro_f1 == 1.0


def test_macro_only_over_present_classes():
    # class 3 is predicted but never true: it lowers precision of nothing and is not averaged
    r = classification_report([0, 0, 1], [0, 3, 1])
    present = [c for c in r.per_class if c.support > 0]
    assert len(present) == 2
    assert r.macro_f1 == pytest.approx(np.mean([c.f1 for c in present]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
def test_matches_sklearn(pairs):
    y_true = [a for a, _ in pairs]
    y_pred = [b for _, b in pairs]
    r = classification_report(y_true, y_pred)
    assert r.accuracy == pytest.approx(accuracy_score(y_true, y_pred), abs=1e-12)
    present = sorted(set(y_true))
    want = f1_score(y_true, y_pred, labels=present, average="macro", zero_division=0)
    assert r.macro_f1 == pytest.approx(want, abs=1e-12)
    assert round(r.accuracy * r.total) == r.correct
    assert 0 <= r.macro_f1 <= 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=30), st.permutations(range(4)))
def test_macro_f1_permutation_invariant(pairs, perm):
    y_true = [a for a, _ in pairs]
    y_pred = [b for _, b in pairs]
    a = classification_report(y_true, y_pred).macro_f1
    b = classification_report([perm[x] for x in y_true], [perm[x] for x in y_pred]).macro_f1
    assert a == pytest.approx(b, abs=1e-12)


def test_no_prediction_counts_wrong():
    r = classification_report([0, 1], [0, NO_PREDICTION])
    assert r.accuracy == 0.5 and r.no_prediction == 1


def _encoded():
    seqs = [list("ABCD"), list("ABDC"), list("AB"), list("ABCDC")]
    attrs = [list("wwww"), list("yyyy"), list("ww"), list("xxxxx")]
    return encode_log(make_log(seqs, attrs), Roles(background="ctx"))


def test_positions_three_to_t_and_model_queries():
    enc = _encoded()
    m = init_model("background", 2, enc.vocabulary, 0)
    r = evaluate_model(m, enc)
    assert r.total == 2 + 2 + 0 + 3
    # same predictions as querying each prefix one at a time
    correct = 0
    for t in enc.traces:
        for p in range(3, len(t) + 1):
            d = predict_next_event(m, t.prefix(p - 1), int(t.background[p - 1]))
            correct += d.argmax == t.events[p - 1]
    assert r.correct == correct


def test_ngram_evaluation_and_train_equals_test():
    enc = encode_log(make_log([list("ABCD"), list("ABDC")]), Roles())
    r = evaluate_model(fit_ngram(enc, 3), enc)
    assert 0 <= r.accuracy <= 1 and r.total == 4


def test_symptom_target():
    seqs = [list("ABCD")] * 3
    attrs = [list("wxyz")] * 3
    enc = encode_log(make_log(seqs, attrs), Roles(symptom="ctx"))
    m = init_model("symptom", 2, enc.vocabulary, 0)
    m.cpds.symptom_emit[:] = np.eye(m.cpds.n_events, m.cpds.n_symptom) + 1e-3
    m.cpds.symptom_emit /= m.cpds.symptom_emit.sum(axis=1, keepdims=True)
    r = evaluate_model(m, enc, SYMPTOM)
    assert r.accuracy == 1.0 and r.total == 6
    with pytest.raises(ConfigError):
        evaluate_model(init_model("pfa", 2, enc.vocabulary, 0), enc, SYMPTOM)


def test_no_evaluable_positions():
    enc = encode_log(make_log([list("AB")]), Roles())
    with pytest.raises(ConfigError):
        evaluate_model(fit_ngram(enc, 3), enc)
