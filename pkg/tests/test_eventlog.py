import io
import logging
from datetime import datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxdbn.errors import ConfigError, DataError, RowError
from ctxdbn.eventlog import (
    CATEGORICAL,
    NUMERIC,
    DiscretizationSpec,
    Event,
    EventLog,
    Roles,
    Trace,
    Vocabulary,
    discretize_attribute,
    encode_log,
    filter_short_traces,
    parse_csv,
    split_log,
    write_csv,
)

SALES = """Order,Event,Timestamp,Distance,Shipping Cost
12345,Receive Customer Order,29.06.2020 19:39,500 km,
12345,Calculate Shipping Route,30.06.2020 11:24,500 km,
12345,Contract Delivery Service,30.06.2020 11:31,500 km,5$
12345,Package Goods,05.07.2020 15:33,500 km,6$
"""


def _parse_sales(text=SALES):
    return parse_csv(
        io.BytesIO(text.encode()),
        case_col="Order",
        activity_col="Event",
        timestamp_col="Timestamp",
        attributes={"Distance": CATEGORICAL, "Shipping Cost": CATEGORICAL},
        timestamp_format="%d.%m.%Y %H:%M",
    )


def make_log(seqs, attr=None):
    traces = []
    for i, seq in enumerate(seqs):
        events = []
        for j, a in enumerate(seq):
            attrs = {} if attr is None or attr[i][j] is None else {"ctx": attr[i][j]}
            events.append(Event(a, datetime(2021, 1, 1, 0, j), attrs))
        traces.append(Trace(f"c{i}", tuple(events)))
    return EventLog(tuple(traces), {"ctx": CATEGORICAL} if attr is not None else {})


def test_sales_order_example():
    log = _parse_sales()
    assert len(log) == 1
    (trace,) = log.traces
    assert trace.case_id == "12345"
    assert len(trace) == 4
    assert set(log.schema) == {"Distance", "Shipping Cost"}
    assert "Shipping Cost" not in trace.events[0].attributes
    assert trace.events[2].attributes["Shipping Cost"] == "5$"


def test_header_only_gives_empty_log():
    log = parse_csv(io.StringIO("case,activity,timestamp\n"))
    assert len(log) == 0


def test_bad_timestamp_names_line():
    text = "case,activity,timestamp\nc1,A,2020-01-01T00:00:00\nc1,B,not-a-date\n"
    with pytest.raises(RowError) as err:
        parse_csv(io.StringIO(text))
    assert err.value.line == 3
    assert "line 3" in str(err.value)


def test_missing_column_is_data_error():
    with pytest.raises(DataError):
        parse_csv(io.StringIO("case,activity\nc,A\n"))


def test_events_sorted_with_stable_ties():
    text = (
        "case,activity,timestamp\n"
        "c,B,2020-01-01T00:05:00\n"
        "c,A,2020-01-01T00:00:00\n"
        "c,X,2020-01-01T00:05:00\n"
        "d,Q,2020-01-01T00:00:00\n"
    )
    log = parse_csv(io.StringIO(text))
    assert log.traces[0].activities == ["A", "B", "X"]
    assert log.case_ids == ["c", "d"]


def test_binary_stream_left_open():
    buf = io.BytesIO(SALES.encode())
    _parse_sales_from(buf)
    assert not buf.closed


def _parse_sales_from(buf):
    return parse_csv(buf, "Order", "Event", "Timestamp", {"Distance": CATEGORICAL}, "%d.%m.%Y %H:%M")


def test_unmapped_columns_ignored():
    log = _parse_sales_from(io.BytesIO(SALES.encode()))
    assert set(log.schema) == {"Distance"}
    assert all(set(e.attributes) <= {"Distance"} for e in log.traces[0].events)


def test_unknown_attribute_rejected():
    ev = Event("A", datetime(2020, 1, 1), {"zz": "1"})
    with pytest.raises(DataError):
        EventLog((Trace("c", (ev,)),), {})


def test_duplicate_case_ids_rejected():
    ev = Event("A", datetime(2020, 1, 1))
    with pytest.raises(DataError):
        EventLog((Trace("c", (ev,)), Trace("c", (ev,))), {})


def test_filter_short_traces(caplog):
    log = make_log([["A", "B"], ["A", "B", "C"], list("ABCDE")])
    with caplog.at_level(logging.WARNING):
        out = filter_short_traces(log)
    assert [len(t) for t in out.traces] == [3, 5]
    assert "removed 1 of 3" in caplog.text
    assert [len(t) for t in log.traces] == [2, 3, 5]


def test_filter_identity_and_all_removed(caplog):
    log = make_log([["A", "B", "C"], list("ABCD")])
    assert filter_short_traces(log).traces == log.traces
    short = make_log([["A"], ["A", "B"]])
    with caplog.at_level(logging.WARNING):
        assert len(filter_short_traces(short)) == 0
    assert "100.0%" in caplog.text


@given(st.lists(st.integers(1, 6), max_size=8), st.integers(1, 5))
def test_filter_idempotent(lengths, min_len):
    log = make_log([["A"] * n for n in lengths])
    once = filter_short_traces(log, min_len)
    assert filter_short_traces(once, min_len).traces == once.traces


def _numeric_log(values):
    events = tuple(
        Event("A", datetime(2020, 1, 1, 0, i), {} if v is None else {"amount": float(v)})
        for i, v in enumerate(values)
    )
    return EventLog((Trace("c", events),), {"amount": NUMERIC})


def test_discretization_boundaries():
    spec = DiscretizationSpec("amount", 0.0, 99999.0, 40)
    assert spec.label_of(0) == "bin_0"
    assert spec.label_of(99999) == "bin_39"
    assert DiscretizationSpec("amount", 0.0, 100000.0, 40).label_of(50000) == "bin_20"
    assert spec.bin_of(-5) == 0 and spec.bin_of(1e9) == 39


def test_discretize_attribute_constant_and_absent():
    log, spec = discretize_attribute(_numeric_log([3, None, 3]), "amount")
    assert spec.lo == spec.hi == 3.0
    evs = log.traces[0].events
    assert evs[0].attributes["amount"] == "bin_0"
    assert "amount" not in evs[1].attributes
    assert log.schema["amount"] == CATEGORICAL


def test_discretize_rejects_categorical():
    with pytest.raises(ConfigError):
        discretize_attribute(make_log([["A"]], [["w"]]), "ctx")


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e5), st.integers(1, 60))
def test_discretization_monotone(v1, v2, width, n):
    spec = DiscretizationSpec("x", -1000.0, -1000.0 + width, n)
    lo, hi = sorted((v1, v2))
    assert 0 <= spec.bin_of(lo) <= spec.bin_of(hi) <= n - 1


def test_vocabulary_first_appearance_and_reserved():
    log = make_log([["A", "B", "C"], ["C", "A"]])
    enc = encode_log(log, Roles())
    v = enc.vocabulary.activity
    assert [v.encode(x) for x in "ABC"] == [0, 1, 2]
    assert (v.missing, v.other) == (3, 4)
    assert list(enc.traces[1].events) == [2, 0]


def test_unseen_test_value_maps_to_other_and_absent_to_missing():
    train = make_log([["A", "B", "C"]], [["w", "x", None]])
    test = make_log([["A", "B", "Q"]], [["Z", None, "w"]])
    enc = encode_log(train, Roles(background="ctx"))
    b = enc.vocabulary.background
    assert enc.traces[0].background.tolist() == [0, 1, b.missing]
    te = encode_log(test, Roles(background="ctx"), enc.vocabulary)
    assert te.traces[0].background.tolist() == [b.other, b.missing, 0]
    assert te.traces[0].events[2] == enc.vocabulary.activity.other


def test_role_errors():
    log = make_log([["A", "B", "C"]], [["w", "x", "y"]])
    with pytest.raises(ConfigError):
        Roles(background="ctx", symptom="ctx")
    with pytest.raises(ConfigError):
        encode_log(log, Roles(symptom="nope"))
    with pytest.raises(ConfigError):
        encode_log(_numeric_log([1, 2, 3]), Roles(background="amount"))


def test_encoded_presence_follows_roles():
    log = make_log([["A", "B", "C"]], [["w", "x", "y"]])
    enc = encode_log(log, Roles(symptom="ctx"))
    t = enc.traces[0]
    assert t.background is None and t.symptom is not None


@given(st.lists(st.text(min_size=1, max_size=3), min_size=1, max_size=10))
def test_vocabulary_round_trip(values):
    v = Vocabulary.build(values)
    for x in values:
        assert v.decode(v.encode(x)) == x
    for i in range(v.size):
        if i < len(v.values):
            assert v.encode(v.decode(i)) == i


def test_split_counts_and_determinism():
    log = make_log([["A", "B", "C"]] * 100)
    tr, te = split_log(log, 0.7, 42)
    assert (len(tr), len(te)) == (70, 30)
    assert set(tr.case_ids).isdisjoint(te.case_ids)
    assert set(tr.case_ids) | set(te.case_ids) == set(log.case_ids)
    tr2, te2 = split_log(log, 0.7, 42)
    assert tr2.case_ids == tr.case_ids and te2.case_ids == te.case_ids


def test_split_single_trace_rejected():
    with pytest.raises(ConfigError):
        split_log(make_log([["A", "B", "C"]]), 0.7, 0)


@settings(max_examples=30)
@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_split_partitions(n, ratio, seed):
    log = make_log([["A"]] * n)
    try:
        tr, te = split_log(log, ratio, seed)
    except ConfigError:
        return
    assert sorted(tr.case_ids + te.case_ids) == sorted(log.case_ids)
    assert set(tr.case_ids).isdisjoint(te.case_ids)


def _normalized(log):
    return [(t.case_id, [(e.activity, e.timestamp, dict(e.attributes)) for e in t.events]) for t in log.traces]


def test_csv_round_trip(tmp_path):
    events = [
        Event("A", datetime(2020, 1, 1, 9), {"amount": 1.5, "kind": "x,y"}),
        Event("B", datetime(2020, 1, 1, 10), {"kind": 'q"q'}),
        Event("C", datetime(2020, 1, 2, 8), {"amount": 1e-7}),
    ]
    log = EventLog((Trace("c1", tuple(events)), Trace("c2", tuple(events[:2]))), {"amount": NUMERIC, "kind": CATEGORICAL})
    path = tmp_path / "log.csv"
    write_csv(log, path)
    again = parse_csv(path, attributes=log.schema)
    assert _normalized(again) == _normalized(log)


@settings(max_examples=25)
@given(
    st.lists(
        st.lists(st.tuples(st.sampled_from("ABC"), st.integers(0, 1000), st.sampled_from(["w", "x", None])), min_size=1, max_size=5),
        min_size=1,
        max_size=4,
    )
)
def test_csv_round_trip_property(raw):
    traces = []
    for i, rows in enumerate(raw):
        rows = sorted(rows, key=lambda r: r[1])
        evs = tuple(
            Event(a, datetime(2020, 1, 1) + (datetime(2020, 1, 1, 0, 0, 1) - datetime(2020, 1, 1)) * m, {} if v is None else {"ctx": v})
            for a, m, v in rows
        )
        traces.append(Trace(f"case{i}", evs))
    log = EventLog(tuple(traces), {"ctx": CATEGORICAL})
    buf = io.StringIO()
    write_csv(log, buf)
    again = parse_csv(io.StringIO(buf.getvalue()), attributes={"ctx": CATEGORICAL})
    assert _normalized(again) == _normalized(log)
