"""Parsers and writers for keystroke logs and sleep CSVs, day bucketing, sleep imputation.

Keystroke CSV::

    timestamp_ms,key
    1000,t
    1120,h
    1300,BACKSPACE

The header is optional on input and always written on output. The key column
is everything after the first comma, so a literal comma key is ``1400,,``.

Keystroke JSONL: one ``{"ts": <int ms>, "key": <str>}`` object per line.

Sleep CSV: header ``date,score``, ISO dates, real scores in [0, 100]. A record
dated D is the night that ended on the morning of D.
"""

from __future__ import annotations

import datetime as dt
import io
import json
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Optional, Sequence, Union

import numpy as np

from .core import (
    MAX_TIMESTAMP_MS,
    KeyStream,
    SleepRecord,
    SleepSeries,
    day_to_date,
    is_valid_key,
)

CSV_HEADER = "timestamp_ms,key"
SLEEP_HEADER = "date,score"

Source = Union[bytes, str, BinaryIO]


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class ParseReport:
    events_accepted: int
    lines_skipped: int
    first_error: Optional[tuple[int, str]] = None
    reordered: bool = False


def _read_text(source: Source) -> str:
    if isinstance(source, str):
        return source
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    return bytes(data).decode("utf-8")


def _lines(text: str) -> list[str]:
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def _parse_timestamp(raw) -> int:
    if isinstance(raw, str):
        if not (raw.isascii() and raw.isdigit()):
            raise ValueError(f"bad timestamp {raw!r}")
        ts = int(raw)
    elif isinstance(raw, int) and not isinstance(raw, bool):
        ts = raw
        if ts < 0:
            raise ValueError(f"negative timestamp {ts}")
    else:
        raise ValueError(f"bad timestamp {raw!r}")
    if ts > MAX_TIMESTAMP_MS:
        raise ValueError(f"timestamp overflow {raw!r}")
    return ts


def _csv_record(line: str) -> tuple[int, str]:
    raw_ts, sep, key = line.partition(",")
    if not sep:
        raise ValueError("expected 'timestamp_ms,key'")
    ts = _parse_timestamp(raw_ts)
    if not key:
        raise ValueError("empty key token")
    if not is_valid_key(key):
        raise ValueError(f"bad key token {key!r}")
    return ts, key


def _jsonl_record(line: str) -> tuple[int, str]:
    obj = json.loads(line)
    if not isinstance(obj, dict) or "ts" not in obj or "key" not in obj:
        raise ValueError("expected an object with 'ts' and 'key'")
    if not isinstance(obj["ts"], int):
        raise ValueError(f"'ts' must be an integer, got {obj['ts']!r}")
    ts = _parse_timestamp(obj["ts"])
    key = obj["key"]
    if not isinstance(key, str) or not key:
        raise ValueError("empty key token")
    if not is_valid_key(key):
        raise ValueError(f"bad key token {key!r}")
    return ts, key


def parse_keystroke_log(source: Source, format: str = "csv", mode: str = "strict",
                        participant_id: str = "", tz_offset_minutes: int = 0
                        ) -> tuple[KeyStream, ParseReport]:
    """Parse a canonical keystroke log.

    In strict mode the first malformed or out-of-order line raises
    :class:`ParseError`. In lenient mode malformed lines are skipped and
    counted, and out-of-order input is stable-sorted with ``reordered`` set.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {format!r}")
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown mode {mode!r}")
    strict = mode == "strict"
    lines = _lines(_read_text(source))
    start = 0
    if format == "csv" and lines and lines[0] == CSV_HEADER:
        start = 1
    record = _csv_record if format == "csv" else _jsonl_record

    timestamps: list[int] = []
    keys: list[str] = []
    skipped = 0
    first_error = None
    reordered = False
    last = -1
    for lineno in range(start, len(lines)):
        try:
            ts, key = record(lines[lineno])
        except ValueError as exc:
            if strict:
                raise ParseError(lineno + 1, str(exc)) from None
            skipped += 1
            if first_error is None:
                first_error = (lineno + 1, str(exc))
            continue
        if ts < last:
            if strict:
                raise ParseError(lineno + 1, f"timestamp {ts} earlier than previous {last}")
            reordered = True
        last = max(last, ts)
        timestamps.append(ts)
        keys.append(key)

    ts_arr = np.array(timestamps, dtype=np.int64)
    if reordered:
        order = np.argsort(ts_arr, kind="stable")
        ts_arr = ts_arr[order]
        keys = [keys[i] for i in order.tolist()]
    stream = KeyStream(participant_id, tz_offset_minutes, ts_arr, tuple(keys))
    return stream, ParseReport(len(keys), skipped, first_error, reordered)


def read_keystroke_log(path, format: Optional[str] = None, mode: str = "strict",
                       participant_id: str = "", tz_offset_minutes: int = 0):
    if format is None:
        format = "jsonl" if str(path).endswith(".jsonl") else "csv"
    with open(path, "rb") as fh:
        return parse_keystroke_log(fh, format, mode, participant_id, tz_offset_minutes)


def merge_streams(streams: Sequence[KeyStream]) -> KeyStream:
    """Merge several streams of one participant by (timestamp, input order)."""
    if not streams:
        raise ValueError("nothing to merge")
    ts = np.concatenate([s.timestamps for s in streams])
    keys = [k for s in streams for k in s.keys]
    order = np.argsort(ts, kind="stable")
    first = streams[0]
    return KeyStream(first.participant_id, first.tz_offset_minutes, ts[order],
                     tuple(keys[i] for i in order.tolist()))


def _check_writable(key: str) -> str:
    if not is_valid_key(key):
        raise ValueError(f"key token cannot be serialized: {key!r}")
    return key


def format_keystroke_csv(stream: KeyStream) -> bytes:
    out = [CSV_HEADER]
    out.extend(f"{t},{_check_writable(k)}" for t, k in zip(stream.timestamps.tolist(), stream.keys))
    return ("\n".join(out) + "\n").encode("utf-8")


def format_keystroke_jsonl(stream: KeyStream) -> bytes:
    lines = [json.dumps({"ts": t, "key": _check_writable(k)}, ensure_ascii=False)
             for t, k in zip(stream.timestamps.tolist(), stream.keys)]
    return "".join(line + "\n" for line in lines).encode("utf-8")


def segment_days(stream: KeyStream) -> dict[dt.date, KeyStream]:
    """Split a stream by local calendar date (fixed tz offset, no DST)."""
    if not len(stream):
        return {}
    days = stream.local_day_numbers()
    # days are non-decreasing because timestamps are
    cuts = np.flatnonzero(np.diff(days)) + 1
    bounds = np.r_[0, cuts, len(days)]
    out = {}
    for lo, hi in zip(bounds[:-1].tolist(), bounds[1:].tolist()):
        out[day_to_date(days[lo])] = stream.take(slice(lo, hi))
    return out


def parse_sleep_csv(source: Source) -> list[SleepRecord]:
    lines = _lines(_read_text(source))
    if not lines:
        raise ParseError(1, f"missing header {SLEEP_HEADER!r}")
    if lines[0].strip() != SLEEP_HEADER:
        raise ParseError(1, f"expected header {SLEEP_HEADER!r}, got {lines[0]!r}")
    records: dict[dt.date, SleepRecord] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 2:
            raise ParseError(lineno, "expected 'date,score'")
        try:
            day = dt.date.fromisoformat(parts[0].strip())
            score = float(parts[1])
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if not math.isfinite(score) or not 0.0 <= score <= 100.0:
            raise ParseError(lineno, f"score {parts[1]!r} outside [0, 100]")
        if day in records:
            raise ParseError(lineno, f"duplicate date {day}")
        records[day] = SleepRecord(day, score)
    return [records[d] for d in sorted(records)]


def read_sleep_csv(path) -> list[SleepRecord]:
    with open(path, "rb") as fh:
        return parse_sleep_csv(fh)


def format_sleep_csv(records: Iterable[SleepRecord]) -> bytes:
    buf = io.StringIO()
    buf.write(SLEEP_HEADER + "\n")
    for r in records:
        score = int(r.score) if float(r.score).is_integer() else repr(float(r.score))
        buf.write(f"{r.date.isoformat()},{score}\n")
    return buf.getvalue().encode("utf-8")


def impute_sleep(records: Sequence[SleepRecord], start: dt.date, end: dt.date) -> SleepSeries:
    """Fill every date in ``[start, end]``.

    Interior gaps are linearly interpolated between the nearest observed
    neighbours; leading and trailing gaps copy the nearest observed score.
    Filled entries carry ``imputed=True``.
    """
    if end < start:
        raise ValueError("empty date range")
    observed = sorted(records, key=lambda r: r.date)
    if not observed:
        raise ValueError("no observed sleep scores to impute from")
    for r in observed:
        if not start <= r.date <= end:
            raise ValueError(f"record {r.date} outside {start}..{end}")
    for a, b in zip(observed, observed[1:]):
        if a.date == b.date:
            raise ValueError(f"duplicate date {a.date}")

    n = (end - start).days + 1
    out: list[SleepRecord] = []
    j = 0  # index of the first observed record dated >= current day
    for i in range(n):
        day = start + dt.timedelta(days=i)
        while j < len(observed) and observed[j].date < day:
            j += 1
        if j < len(observed) and observed[j].date == day:
            out.append(observed[j])
            continue
        left = observed[j - 1] if j > 0 else None
        right = observed[j] if j < len(observed) else None
        if left is None:
            score = right.score
        elif right is None:
            score = left.score
        else:
            span = (right.date - left.date).days
            frac = (day - left.date).days / span
            score = left.score + frac * (right.score - left.score)
        out.append(SleepRecord(day, min(100.0, max(0.0, score)), imputed=True))
    return SleepSeries(tuple(out))
