"""Domain types and the rank/correlation primitives shared by every module."""

from __future__ import annotations

import datetime as dt
import math
import re
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

LETTERS = string.ascii_uppercase
N_BIGRAMS = 26 * 26
MS_PER_DAY = 86_400_000
EPOCH = dt.date(1970, 1, 1)
MAX_TIMESTAMP_MS = 2**63 - 1

# a-z and A-Z map to 0..25; everything else is a non-letter
LETTER_INDEX = {c: i for i, c in enumerate(LETTERS)}
LETTER_INDEX.update({c.lower(): i for i, c in enumerate(LETTERS)})

_NAMED_KEY = re.compile(r"[A-Z][A-Z0-9_]*\Z")


class UndefinedCorrelation(ValueError):
    """A correlation coefficient is mathematically undefined for the input."""


def is_valid_key(key: str) -> bool:
    if len(key) == 1:
        return key not in "\r\n"
    return bool(_NAMED_KEY.match(key))


class Bigram(str):
    """Two letters A-Z, always stored upper-case ("TH")."""

    __slots__ = ()

    def __new__(cls, value: str) -> "Bigram":
        if isinstance(value, Bigram):
            return value
        if len(value) != 2 or value[0] not in LETTER_INDEX or value[1] not in LETTER_INDEX:
            raise ValueError(f"not a letter bigram: {value!r}")
        return super().__new__(cls, value.upper())

    @classmethod
    def from_code(cls, code: int) -> "Bigram":
        return cls(LETTERS[code // 26] + LETTERS[code % 26])

    @property
    def first(self) -> str:
        return self[0]

    @property
    def second(self) -> str:
        return self[1]

    @property
    def code(self) -> int:
        return 26 * LETTER_INDEX[self[0]] + LETTER_INDEX[self[1]]


ALL_BIGRAMS: tuple[Bigram, ...] = tuple(Bigram.from_code(i) for i in range(N_BIGRAMS))


@dataclass(frozen=True)
class KeyEvent:
    timestamp_ms: int
    key: str

    def __post_init__(self):
        if not 0 <= self.timestamp_ms <= MAX_TIMESTAMP_MS:
            raise ValueError(f"timestamp out of range: {self.timestamp_ms}")
        if not self.key:
            raise ValueError("empty key token")


@dataclass(frozen=True, eq=False)
class KeyStream:
    """Keystrokes of one participant, held column-wise.

    ``timestamps`` is an int64 array and ``keys`` a tuple of key tokens of the
    same length. Iterating yields :class:`KeyEvent` values.
    """

    participant_id: str
    tz_offset_minutes: int
    timestamps: np.ndarray
    keys: tuple[str, ...]

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "keys", tuple(self.keys))
        if ts.ndim != 1 or len(ts) != len(self.keys):
            raise ValueError("timestamps and keys must be 1-d and equally long")
        if len(ts):
            if ts[0] < 0:
                raise ValueError("negative timestamp")
            if np.any(ts[1:] < ts[:-1]):
                raise ValueError("timestamps must be non-decreasing")

    @classmethod
    def from_events(cls, events: Iterable[KeyEvent | tuple[int, str]],
                    participant_id: str = "", tz_offset_minutes: int = 0) -> "KeyStream":
        ts, keys = [], []
        for ev in events:
            if not isinstance(ev, KeyEvent):
                ev = KeyEvent(int(ev[0]), ev[1])
            ts.append(ev.timestamp_ms)
            keys.append(ev.key)
        return cls(participant_id, tz_offset_minutes, np.array(ts, dtype=np.int64), tuple(keys))

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self) -> Iterator[KeyEvent]:
        for t, k in zip(self.timestamps.tolist(), self.keys):
            yield KeyEvent(t, k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KeyStream):
            return NotImplemented
        return (self.participant_id == other.participant_id
                and self.tz_offset_minutes == other.tz_offset_minutes
                and self.keys == other.keys
                and np.array_equal(self.timestamps, other.timestamps))

    @property
    def events(self) -> list[KeyEvent]:
        return list(self)

    def local_day_numbers(self) -> np.ndarray:
        """Days since 1970-01-01 in the stream's local time, per event."""
        return local_day_numbers(self.timestamps, self.tz_offset_minutes)

    def take(self, index) -> "KeyStream":
        idx = np.arange(len(self))[index]
        return KeyStream(self.participant_id, self.tz_offset_minutes,
                         self.timestamps[idx], tuple(self.keys[i] for i in idx.tolist()))


def local_day_numbers(timestamps_ms: np.ndarray, tz_offset_minutes: int) -> np.ndarray:
    ts = np.asarray(timestamps_ms, dtype=np.int64)
    return (ts + tz_offset_minutes * 60_000) // MS_PER_DAY


def day_to_date(day_number: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(day_number))


def date_to_day(day: dt.date) -> int:
    return (day - EPOCH).days


@dataclass(frozen=True)
class BigramObservation:
    bigram: Bigram
    latency_ms: int
    day: dt.date


@dataclass(frozen=True)
class BigramStats:
    bigram: Bigram
    count: int
    mean_ms: float
    std_ms: Optional[float]
    min_ms: int
    max_ms: int


@dataclass(frozen=True)
class ConsistencyMatrix:
    """Day-by-day rank correlations; ``None`` marks an undefined entry."""

    days: tuple[dt.date, ...]
    k: int
    rho: tuple[tuple[Optional[float], ...], ...]
    average: Optional[float]
    n_defined: int = 0

    def entry(self, a: dt.date, b: dt.date) -> Optional[float]:
        i, j = self.days.index(a), self.days.index(b)
        return self.rho[i][j]


@dataclass(frozen=True)
class SleepRecord:
    date: dt.date
    score: float
    imputed: bool = False

    def __post_init__(self):
        if not (0.0 <= self.score <= 100.0):
            raise ValueError(f"sleep score outside [0, 100]: {self.score}")


@dataclass(frozen=True)
class SleepSeries:
    """Date-ordered, gap-free sleep scores."""

    records: tuple[SleepRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for a, b in zip(self.records, self.records[1:]):
            if (b.date - a.date).days != 1:
                raise ValueError(f"sleep series not contiguous at {a.date} -> {b.date}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SleepRecord]:
        return iter(self.records)

    @property
    def start(self) -> Optional[dt.date]:
        return self.records[0].date if self.records else None

    @property
    def end(self) -> Optional[dt.date]:
        return self.records[-1].date if self.records else None

    def get(self, day: dt.date) -> Optional[SleepRecord]:
        if not self.records:
            return None
        i = (day - self.records[0].date).days
        if 0 <= i < len(self.records):
            return self.records[i]
        return None


@dataclass(frozen=True)
class AnalysisConfig:
    gap_threshold_ms: int = 1000
    top_k: int = 200
    min_common_bigrams: int = 5
    include_diagonal: bool = False
    # fixed: spearman for rankings, pearson for sleep
    correlation_method_rankings: str = field(default="spearman", init=False)
    correlation_method_sleep: str = field(default="pearson", init=False)

    def __post_init__(self):
        if self.gap_threshold_ms <= 0:
            raise ValueError("gap_threshold_ms must be positive")
        if not 1 <= self.top_k <= N_BIGRAMS:
            raise ValueError(f"top_k must be in [1, {N_BIGRAMS}]")
        if self.min_common_bigrams < 2:
            raise ValueError("min_common_bigrams must be at least 2")


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """Rank 1 is the smallest value; ties share the mean of the ranks they span.

    >>> fractional_ranks([5, 1, 5, 2]).tolist()
    [3.5, 1.0, 3.5, 2.0]
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("fractional_ranks needs a non-empty 1-d sequence")
    if np.isnan(a).any():
        raise ValueError("cannot rank NaN")
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    bounds = np.flatnonzero(np.r_[True, s[1:] != s[:-1], True])
    starts, stops = bounds[:-1], bounds[1:]
    ranks = np.empty(a.size)
    ranks[order] = np.repeat((starts + 1 + stops) / 2.0, stops - starts)
    return ranks


def _paired(x_values, y_values) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two paired values")
    return x, y


def pearson(x_values: Sequence[float], y_values: Sequence[float]) -> float:
    x, y = _paired(x_values, y_values)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelation("zero variance")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x_values: Sequence[float], y_values: Sequence[float]) -> float:
    """Pearson correlation of fractional ranks."""
    x, y = _paired(x_values, y_values)
    return pearson(fractional_ranks(x), fractional_ranks(y))
