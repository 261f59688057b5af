from collections import Counter
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxdbn.baselines import fit_ngram, ngram_predict, ngram_sweep
from ctxdbn.errors import ConfigError
from ctxdbn.eventlog import Roles, encode_log, split_log
from ctxdbn.synthetic import SyntheticSpec, generate

from .test_eventlog import make_log


def _enc(seqs):
    return encode_log(make_log(seqs), Roles())


def _brute_counts(seqs, ctx):
    # count successors of an exact context by scanning every window
    out = Counter()
    L = len(ctx)
    for s in seqs:
        for j in range(L, len(s)):
            if tuple(s[j - L:j]) == ctx:
                out[s[j]] += 1
    return out


def test_trigram_counts():
    enc = _enc([list("ABC"), list("ABC"), list("ABD")])
    m = fit_ngram(enc, 3)
    a, b, c, d = (enc.vocabulary.activity.encode(x) for x in "ABCD")
    assert m.contexts[(a, b)] == Counter({c: 2, d: 1})
    dist = ngram_predict(m, [a, b])
    assert dist.argmax == c
    assert dist.probs[c] == pytest.approx(2 / 3)


def test_short_trace_only_unit_context():
    enc = _enc([list("AB")])
    m = fit_ngram(enc, 3)
    assert set(m.contexts) == {(0,)}
    assert m.contexts[(0,)] == Counter({1: 1})


def test_bigram_only_length_one_contexts():
    enc = _enc([list("ABCAB")])
    assert all(len(k) == 1 for k in fit_ngram(enc, 2).contexts)


def test_backoff_and_unigram_fallback():
    enc = _enc([list("ABC"), list("ABC"), list("XBD")])
    v = enc.vocabulary.activity
    m = fit_ngram(enc, 3)
    a, b, c, x = (v.encode(s) for s in "ABCX")
    assert m.lookup([c, b])[0] == (b,)
    other = v.other
    ctx, _ = m.lookup([other, other])
    assert ctx == ()
    assert ngram_predict(m, [other]).argmax == int(np.argmax([m.unigram[i] for i in range(v.size)]))


def test_fit_errors():
    with pytest.raises(ConfigError):
        fit_ngram(_enc([list("AB")]), 1)
    with pytest.raises(ConfigError):
        fit_ngram(_enc([list("AB")]).with_traces([]), 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from("ABC"), min_size=1, max_size=6), min_size=1, max_size=6), st.integers(2, 4))
def test_counts_match_window_scan(seqs, n):
    enc = _enc(seqs)
    ints = [list(map(int, t.events)) for t in enc.traces]
    m = fit_ngram(enc, n)
    for L in range(1, n):
        for ctx in product(range(3), repeat=L):
            want = _brute_counts(ints, ctx)
            assert m.contexts.get(ctx, Counter()) == want
    for ctx, counts in m.contexts.items():
        assert len(ctx) <= n - 1 and all(k >= 1 for k in counts.values())


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([0, 1, 2, 3, 4]), min_size=1, max_size=6))
def test_backoff_total(prefix):
    m = fit_ngram(_enc([list("ABC"), list("CBA")]), 4)
    d = ngram_predict(m, prefix)
    assert d.probs.sum() == pytest.approx(1.0)


def test_full_context_used_when_present():
    enc = _enc([list("ABCD"), list("XBCE")])
    m = fit_ngram(enc, 4)
    v = enc.vocabulary.activity
    prefix = [v.encode(s) for s in "ABC"]
    assert m.lookup(prefix)[0] == tuple(prefix)


def test_sweep_deterministic_and_near_optimum():
    log = generate(SyntheticSpec("background-random", 1000, 3))
    tr, te = split_log(log, 0.7, 0)
    etr = encode_log(tr, Roles())
    ete = encode_log(te, Roles(), etr.vocabulary)
    a = ngram_sweep(etr, ete)
    b = ngram_sweep(etr, ete)
    assert a.to_dict() == b.to_dict()
    assert [r.n for r in a.rows] == [3, 4, 5, 6, 7]
    assert abs(a.row(a.best_accuracy_n).accuracy - 0.75) <= 0.03
