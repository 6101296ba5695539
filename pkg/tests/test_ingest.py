import datetime as dt
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from keydyn.core import KeyStream, SleepRecord
from keydyn.ingest import (
    ParseError,
    format_keystroke_csv,
    format_keystroke_jsonl,
    format_sleep_csv,
    impute_sleep,
    merge_streams,
    parse_keystroke_log,
    parse_sleep_csv,
    segment_days,
)

D = dt.date


def local_ms(y, mo, d, h, mi, s, ms, tz_offset_minutes):
    local = dt.datetime(y, mo, d, h, mi, s, ms * 1000)
    return int((local - dt.datetime(1970, 1, 1)).total_seconds() * 1000) - tz_offset_minutes * 60_000


# -- keystroke logs ----------------------------------------------------------

def test_empty_file_gives_empty_stream():
    stream, rep = parse_keystroke_log(b"")
    assert len(stream) == 0
    assert rep.events_accepted == 0 and rep.lines_skipped == 0


def test_header_only():
    stream, rep = parse_keystroke_log(b"timestamp_ms,key\n")
    assert len(stream) == 0


@pytest.mark.parametrize("data", [b"1000,t\n1120,h\n", b"timestamp_ms,key\n1000,t\n1120,h\n", b"1000,t\n1120,h"])
def test_two_well_formed_lines(data):
    stream, rep = parse_keystroke_log(data)
    assert [(e.timestamp_ms, e.key) for e in stream] == [(1000, "t"), (1120, "h")]
    assert rep.events_accepted == 2


def test_lenient_skips_bad_timestamp():
    stream, rep = parse_keystroke_log(b"abc,t\n", mode="lenient")
    assert len(stream) == 0
    assert rep.lines_skipped == 1
    assert rep.first_error[0] == 1


def test_strict_reports_line_number():
    with pytest.raises(ParseError) as err:
        parse_keystroke_log(b"timestamp_ms,key\n1000,t\nabc,h\n")
    assert err.value.line == 3


@pytest.mark.parametrize("line", [
    b"1000", b"1000,", b"-5,a", b"+5,a", b" 5,a", b"1.5,a", b"1_000,a", b"1000,ab", b"1000,Backspace",
    b"1000,t\r", b"99999999999999999999,a", b"",
])
def test_malformed_lines(line):
    with pytest.raises(ParseError):
        parse_keystroke_log(line + b"\n")


def test_timestamp_overflow_message():
    with pytest.raises(ParseError, match="overflow"):
        parse_keystroke_log(b"9223372036854775808,a\n")


@pytest.mark.parametrize("key", [",", " ", "é", "BACKSPACE", "LEFT_ARROW", "F12"])
def test_unusual_but_valid_keys(key):
    stream, _ = parse_keystroke_log(f"5,{key}\n".encode())
    assert stream.keys == (key,)


def test_out_of_order_strict_and_lenient():
    data = b"100,a\n50,b\n50,c\n200,d\n"
    with pytest.raises(ParseError) as err:
        parse_keystroke_log(data)
    assert err.value.line == 2
    stream, rep = parse_keystroke_log(data, mode="lenient")
    assert rep.reordered
    assert [(e.timestamp_ms, e.key) for e in stream] == [(50, "b"), (50, "c"), (100, "a"), (200, "d")]


def test_duplicate_timestamps_keep_input_order():
    stream, _ = parse_keystroke_log(b"5,b\n5,a\n5,c\n")
    assert stream.keys == ("b", "a", "c")


def test_jsonl():
    data = b'{"ts": 1000, "key": "t"}\n{"ts": 1120, "key": "BACKSPACE", "extra": 1}\n'
    stream, rep = parse_keystroke_log(data, format="jsonl")
    assert [(e.timestamp_ms, e.key) for e in stream] == [(1000, "t"), (1120, "BACKSPACE")]


@pytest.mark.parametrize("line", [
    '{"ts": 1.5, "key": "a"}', '{"ts": true, "key": "a"}', '{"ts": "5", "key": "a"}', '{"ts": 5}',
    '{"ts": 5, "key": ""}', '{"ts": -1, "key": "a"}', "[1, 2]", "not json",
])
def test_jsonl_malformed(line):
    with pytest.raises(ParseError):
        parse_keystroke_log(line.encode() + b"\n", format="jsonl")
    _, rep = parse_keystroke_log(line.encode() + b"\n", format="jsonl", mode="lenient")
    assert rep.lines_skipped == 1


def test_accepts_file_objects():
    stream, _ = parse_keystroke_log(io.BytesIO(b"1,a\n2,b\n"), participant_id="p", tz_offset_minutes=30)
    assert stream.participant_id == "p" and stream.tz_offset_minutes == 30


keys = st.one_of(
    st.characters(blacklist_characters="\r\n", blacklist_categories=("Cs",)),
    st.from_regex(r"[A-Z][A-Z0-9_]{1,10}", fullmatch=True),
)


@st.composite
def streams(draw):
    gaps = draw(st.lists(st.integers(0, 5000), max_size=60))
    start = draw(st.integers(0, 2**40))
    ts = start + np.cumsum(np.array(gaps, dtype=np.int64))
    ks = draw(st.lists(keys, min_size=len(gaps), max_size=len(gaps)))
    return KeyStream("p", 0, ts, tuple(ks))


@given(streams())
def test_csv_round_trip(stream):
    parsed, rep = parse_keystroke_log(format_keystroke_csv(stream), participant_id="p")
    assert parsed == stream
    assert rep.lines_skipped == 0


@given(streams())
def test_jsonl_round_trip(stream):
    parsed, _ = parse_keystroke_log(format_keystroke_jsonl(stream), "jsonl", participant_id="p")
    assert parsed == stream


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 10**9)), max_size=50))
def test_lenient_accepts_total_minus_malformed(lines):
    text = "".join((f"{t},x\n" if good else f"{t}x,\n") for good, t in lines)
    stream, rep = parse_keystroke_log(text.encode(), mode="lenient")
    bad = sum(not good for good, _ in lines)
    assert rep.events_accepted == len(lines) - bad
    assert rep.lines_skipped == bad
    assert len(stream) == len(lines) - bad


def test_merge_streams_is_stable_by_timestamp():
    a = KeyStream.from_events([(1, "a"), (5, "b")])
    b = KeyStream.from_events([(1, "c"), (3, "d")])
    merged = merge_streams([a, b])
    assert [(e.timestamp_ms, e.key) for e in merged] == [(1, "a"), (1, "c"), (3, "d"), (5, "b")]


# -- day segmentation ----------------------------------------------------------

def test_segment_single_day():
    s = KeyStream.from_events([(1000, "a"), (2000, "b")])
    assert list(segment_days(s)) == [D(1970, 1, 1)]


@pytest.mark.parametrize("tz", [0, 60, -300, 330])
def test_segment_midnight_boundary(tz):
    t0 = local_ms(2020, 3, 1, 23, 59, 59, 500, tz)
    t1 = local_ms(2020, 3, 2, 0, 0, 0, 500, tz)
    s = KeyStream.from_events([(t0, "a"), (t1, "b")], tz_offset_minutes=tz)
    seg = segment_days(s)
    assert list(seg) == [D(2020, 3, 1), D(2020, 3, 2)]
    assert [len(v) for v in seg.values()] == [1, 1]


def test_segment_empty():
    assert segment_days(KeyStream.from_events([])) == {}


@given(streams(), st.integers(-720, 840))
def test_segments_partition_the_stream(stream, tz):
    stream = KeyStream("p", tz, stream.timestamps, stream.keys)
    seg = segment_days(stream)
    assert sum(len(v) for v in seg.values()) == len(stream)
    assert merge_streams(list(seg.values())) == stream if seg else len(stream) == 0
    for day, part in seg.items():
        for ev in part:
            local = dt.datetime(1970, 1, 1) + dt.timedelta(milliseconds=ev.timestamp_ms, minutes=tz)
            assert local.date() == day


# -- sleep ---------------------------------------------------------------------

def test_parse_sleep_single_row():
    recs = parse_sleep_csv(b"date,score\n2020-01-01,85\n")
    assert recs == [SleepRecord(D(2020, 1, 1), 85.0, False)]


def test_parse_sleep_out_of_range():
    with pytest.raises(ParseError):
        parse_sleep_csv(b"date,score\n2020-01-01,101\n")
    with pytest.raises(ParseError):
        parse_sleep_csv(b"date,score\n2020-01-01,-1\n")


def test_parse_sleep_empty_body():
    assert parse_sleep_csv(b"date,score\n") == []


@pytest.mark.parametrize("body", [
    b"2020-01-01,80\n2020-01-01,81\n", b"2020-13-01,80\n", b"2020-01-01\n", b"2020-01-01,x\n",
    b"2020-01-01,nan\n",
])
def test_parse_sleep_errors(body):
    with pytest.raises(ParseError):
        parse_sleep_csv(b"date,score\n" + body)


def test_parse_sleep_requires_header():
    with pytest.raises(ParseError):
        parse_sleep_csv(b"2020-01-01,85\n")


def test_parse_sleep_sorts():
    recs = parse_sleep_csv(b"date,score\n2020-01-03,70\n2020-01-01,85.5\n")
    assert [r.date for r in recs] == [D(2020, 1, 1), D(2020, 1, 3)]
    assert parse_sleep_csv(format_sleep_csv(recs)) == recs


def test_impute_no_gaps():
    recs = [SleepRecord(D(2020, 1, i), 70.0 + i) for i in range(1, 4)]
    series = impute_sleep(recs, D(2020, 1, 1), D(2020, 1, 3))
    assert list(series) == recs


def test_impute_linear_midpoint():
    recs = [SleepRecord(D(2020, 1, 1), 70.0), SleepRecord(D(2020, 1, 3), 80.0)]
    series = impute_sleep(recs, D(2020, 1, 1), D(2020, 1, 3))
    assert series.records[1] == SleepRecord(D(2020, 1, 2), 75.0, True)


def test_impute_leading_gap_uses_nearest():
    recs = [SleepRecord(D(2020, 1, 3), 80.0)]
    series = impute_sleep(recs, D(2020, 1, 1), D(2020, 1, 4))
    assert [(r.score, r.imputed) for r in series] == [(80.0, True), (80.0, True), (80.0, False), (80.0, True)]


def test_impute_errors():
    with pytest.raises(ValueError):
        impute_sleep([], D(2020, 1, 1), D(2020, 1, 2))
    with pytest.raises(ValueError):
        impute_sleep([SleepRecord(D(2020, 1, 5), 80.0)], D(2020, 1, 1), D(2020, 1, 2))
    with pytest.raises(ValueError):
        impute_sleep([SleepRecord(D(2020, 1, 1), 80.0)], D(2020, 1, 2), D(2020, 1, 1))


@given(st.dictionaries(st.integers(0, 60), st.floats(0, 100), min_size=1), st.integers(0, 20))
def test_impute_properties(observed, pad):
    start = D(2021, 1, 1)
    recs = [SleepRecord(start + dt.timedelta(days=i), s) for i, s in observed.items()]
    lo = min(observed) - pad
    first, last = start + dt.timedelta(days=lo), start + dt.timedelta(days=max(observed) + pad)
    series = impute_sleep(recs, first, last)
    assert len(series) == (last - first).days + 1
    by_date = {r.date: r for r in recs}
    for r in series:
        assert 0.0 <= r.score <= 100.0
        if r.date in by_date:
            assert r == by_date[r.date]
        else:
            assert r.imputed
