"""Deterministic synthetic typists and sleep series.

Randomness comes from a single ``numpy.random.Generator`` built as
``numpy.random.default_rng(seed)``, i.e. the PCG64 bit generator seeded
through ``SeedSequence(seed)``. Draws are consumed in a fixed order (per day:
shift noise, case flips, special-key mask, letters, special keys, latency
normals, then truncation redraws), so one seed gives one stream on every
platform running the same numpy release.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ALL_BIGRAMS,
    LETTERS,
    MS_PER_DAY,
    N_BIGRAMS,
    Bigram,
    KeyStream,
    SleepRecord,
    date_to_day,
)

# relative letter frequencies of English text, percent
ENGLISH_LETTER_WEIGHTS = {
    "A": 8.167, "B": 1.492, "C": 2.782, "D": 4.253, "E": 12.702, "F": 2.228,
    "G": 2.015, "H": 6.094, "I": 6.966, "J": 0.153, "K": 0.772, "L": 4.025,
    "M": 2.406, "N": 6.749, "O": 7.507, "P": 1.929, "Q": 0.095, "R": 5.987,
    "S": 6.327, "T": 9.056, "U": 2.758, "V": 0.978, "W": 2.360, "X": 0.150,
    "Y": 1.974, "Z": 0.074,
}

SPECIAL_KEYS = (" ", " ", " ", ".", ",", "1", "7", "'", "BACKSPACE", "LEFT_ARROW",
                "RIGHT_ARROW", "RETURN", "TAB", "SHIFT")


@dataclass(frozen=True)
class SleepLink:
    """Daily latency shift = slope * (score - reference) + N(0, noise_std)."""

    slope: float
    scores: Mapping[dt.date, float]
    noise_std: float = 0.0
    reference: float = 75.0


@dataclass(frozen=True)
class TypistModel:
    seed: int
    bigram_latency: Mapping[str, tuple[float, float]]
    day_plan: Sequence[tuple[dt.date, int]]
    letter_weights: Mapping[str, float] = field(default_factory=lambda: dict(ENGLISH_LETTER_WEIGHTS))
    special_key_rate: float = 0.15
    uppercase_rate: float = 0.03
    default_latency: tuple[float, float] = (250.0, 60.0)
    special_latency: tuple[float, float] = (320.0, 90.0)
    max_latency_ms: int = 1000
    sleep_link: Optional[SleepLink] = None
    participant_id: str = "synthetic"
    tz_offset_minutes: int = 0
    start_minute: int = 9 * 60

    def __post_init__(self):
        for b, (mean, std) in self.bigram_latency.items():
            Bigram(b)
            if mean <= 0 or std < 0:
                raise ValueError(f"bad latency model for {b}: mean={mean}, std={std}")
        for mean, std in (self.default_latency, self.special_latency):
            if mean <= 0 or std < 0:
                raise ValueError("latency means must be positive and stds non-negative")
        for name in ("special_key_rate", "uppercase_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        w = [self.letter_weights.get(c, 0.0) for c in LETTERS]
        if min(w) < 0 or sum(w) <= 0:
            raise ValueError("letter weights must be non-negative with a positive sum")
        days = [d for d, _ in self.day_plan]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError("day plan dates must be strictly increasing")
        if any(n < 0 for _, n in self.day_plan):
            raise ValueError("negative keystroke count in day plan")
        if self.max_latency_ms < 1:
            raise ValueError("max_latency_ms must be >= 1")

    def latency_tables(self) -> tuple[np.ndarray, np.ndarray]:
        means = np.full(N_BIGRAMS, float(self.default_latency[0]))
        stds = np.full(N_BIGRAMS, float(self.default_latency[1]))
        for b, (m, s) in self.bigram_latency.items():
            means[Bigram(b).code] = m
            stds[Bigram(b).code] = s
        return means, stds


@dataclass(frozen=True)
class GroundTruth:
    bigram_means: dict[Bigram, float]
    day_offsets: dict[dt.date, float]


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _Phi(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def truncated_normal_mean(mean: float, std: float, low: float, high: float) -> float:
    """Mean of N(mean, std^2) restricted to [low, high]."""
    if std == 0:
        return min(max(mean, low), high)
    a, b = (low - mean) / std, (high - mean) / std
    z = _Phi(b) - _Phi(a)
    if z <= 0:
        return low if mean < low else high
    return mean + std * (_phi(a) - _phi(b)) / z


def _truncated_normal(rng: np.random.Generator, means: np.ndarray, stds: np.ndarray,
                      low: float, high: float) -> np.ndarray:
    x = means + stds * rng.standard_normal(len(means))
    bad = np.flatnonzero((x < low) | (x > high))
    for _ in range(100):
        if not len(bad):
            break
        x[bad] = means[bad] + stds[bad] * rng.standard_normal(len(bad))
        bad = bad[(x[bad] < low) | (x[bad] > high)]
    # only reached for means far outside [low, high]
    return np.clip(x, low, high)


def generate_stream(model: TypistModel) -> tuple[KeyStream, GroundTruth]:
    """Generate the keystrokes described by ``model``.

    Each day starts at ``start_minute`` local time. Tokens are letters drawn
    from the unigram weights, replaced by a special key with probability
    ``special_key_rate``. The gap before a letter that follows a letter comes
    from that bigram's normal model (shifted by the day's sleep offset),
    truncated to [1, max_latency_ms] and rounded to whole milliseconds.
    """
    rng = np.random.default_rng(model.seed)
    means, stds = model.latency_tables()
    weights = np.array([model.letter_weights.get(c, 0.0) for c in LETTERS], dtype=float)
    weights /= weights.sum()
    lower = np.array(list(LETTERS.lower()))
    upper = np.array(list(LETTERS))
    specials = np.array(SPECIAL_KEYS, dtype=object)
    hi = float(model.max_latency_ms)

    all_ts: list[np.ndarray] = []
    all_keys: list[str] = []
    offsets: dict[dt.date, float] = {}
    for day, n in model.day_plan:
        offset = 0.0
        if model.sleep_link is not None:
            link = model.sleep_link
            if day not in link.scores:
                raise ValueError(f"sleep link has no score for {day}")
            offset = link.slope * (link.scores[day] - link.reference)
            if link.noise_std > 0:
                offset += link.noise_std * float(rng.standard_normal())
        offsets[day] = offset
        if n == 0:
            continue

        upcase = rng.random(n) < model.uppercase_rate
        special = rng.random(n) < model.special_key_rate
        letter = rng.choice(26, size=n, p=weights)
        which = rng.integers(len(SPECIAL_KEYS), size=n)

        pair = ~special[:-1] & ~special[1:]
        codes = letter[:-1] * 26 + letter[1:]
        mu = np.where(pair, means[codes], model.special_latency[0]) + offset
        sd = np.where(pair, stds[codes], model.special_latency[1])
        gaps = np.rint(_truncated_normal(rng, mu, sd, 1.0, hi)).astype(np.int64)

        tokens = np.where(upcase, upper[letter], lower[letter]).astype(object)
        tokens[special] = specials[which[special]]

        start = (date_to_day(day) * MS_PER_DAY + model.start_minute * 60_000
                 - model.tz_offset_minutes * 60_000)
        ts = start + np.r_[0, np.cumsum(gaps)]
        end_local_day = (int(ts[-1]) + model.tz_offset_minutes * 60_000) // MS_PER_DAY
        if end_local_day != date_to_day(day):
            raise ValueError(f"{n} keystrokes on {day} run past local midnight")
        all_ts.append(ts)
        all_keys.extend(tokens.tolist())

    ts = np.concatenate(all_ts) if all_ts else np.empty(0, dtype=np.int64)
    stream = KeyStream(model.participant_id, model.tz_offset_minutes, ts, tuple(all_keys))
    truth = {b: truncated_normal_mean(float(means[b.code]), float(stds[b.code]), 1.0, hi)
             for b in ALL_BIGRAMS}
    return stream, GroundTruth(truth, offsets)


def generate_sleep_series(seed: int, start: dt.date, end: dt.date, base: float = 78.0,
                          variability: float = 8.0, gap_rate: float = 0.0,
                          anchors: Sequence[dt.date] = ()) -> list[SleepRecord]:
    """Integer nightly scores ~ N(base, variability^2) clamped to [0, 100].

    Each date is dropped with probability ``gap_rate`` unless listed in
    ``anchors``.
    """
    if end < start:
        raise ValueError("empty date range")
    if not 0.0 <= base <= 100.0 or variability < 0:
        raise ValueError("base must be in [0, 100] and variability non-negative")
    if not 0.0 <= gap_rate <= 1.0:
        raise ValueError("gap_rate must be a probability")
    rng = np.random.default_rng(seed)
    n = (end - start).days + 1
    scores = np.clip(np.rint(base + variability * rng.standard_normal(n)), 0, 100)
    keep = rng.random(n) >= gap_rate
    anchor_set = set(anchors)
    out = []
    for i in range(n):
        day = start + dt.timedelta(days=i)
        if keep[i] or day in anchor_set:
            out.append(SleepRecord(day, float(scores[i])))
    return out


def likely_bigrams(letter_weights: Mapping[str, float] = ENGLISH_LETTER_WEIGHTS) -> list[Bigram]:
    """All 676 bigrams, most probable first under independent letter draws."""
    w = {c: letter_weights.get(c, 0.0) for c in LETTERS}
    return sorted(ALL_BIGRAMS, key=lambda b: (-w[b[0]] * w[b[1]], b))


def random_typist(seed: int, n_days: int, keystrokes_per_day: int, support_size: int = N_BIGRAMS,
                  start: dt.date = dt.date(2020, 1, 1), mean_range: tuple[float, float] = (150.0, 400.0),
                  std_range: tuple[float, float] = (30.0, 50.0), **kwargs) -> TypistModel:
    """A typist whose ``support_size`` likeliest bigrams get random speeds.

    Means and stds are uniform over their ranges, drawn from their own
    generator seeded with ``seed`` so the profile is fixed per seed.
    """
    rng = np.random.default_rng([seed, 1])
    support = likely_bigrams(kwargs.get("letter_weights", ENGLISH_LETTER_WEIGHTS))[:support_size]
    m = rng.uniform(*mean_range, size=len(support))
    s = rng.uniform(*std_range, size=len(support))
    table = {b: (float(mi), float(si)) for b, mi, si in zip(support, m, s)}
    plan = [(start + dt.timedelta(days=i), keystrokes_per_day) for i in range(n_days)]
    return TypistModel(seed=seed, bigram_latency=table, day_plan=plan, **kwargs)
