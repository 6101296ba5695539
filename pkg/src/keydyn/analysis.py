"""Bigram latency extraction and the analyses built on it.

Everything here is a pure function of its inputs. Observations are held
column-wise in :class:`Observations` so that multi-million keystroke logs stay
cheap; iterating one yields :class:`BigramObservation` values.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    LETTER_INDEX,
    N_BIGRAMS,
    AnalysisConfig,
    Bigram,
    BigramObservation,
    BigramStats,
    ConsistencyMatrix,
    KeyStream,
    SleepSeries,
    UndefinedCorrelation,
    date_to_day,
    day_to_date,
    fractional_ranks,
    pearson,
    spearman,
)

DailyStatsTable = dict[dt.date, dict[Bigram, BigramStats]]

NORVIG_TOP10 = ("TH", "HE", "IN", "ER", "AN", "RE", "ON", "AT", "EN", "ND")


@dataclass(frozen=True, eq=False)
class Observations:
    codes: np.ndarray
    latencies: np.ndarray
    day_numbers: np.ndarray
    dropped_nonpositive: int = 0
    dropped_over_threshold: int = 0

    def __post_init__(self):
        for name in ("codes", "latencies", "day_numbers"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not len(self.codes) == len(self.latencies) == len(self.day_numbers):
            raise ValueError("column length mismatch")

    @classmethod
    def from_records(cls, records: Iterable[BigramObservation]) -> "Observations":
        records = list(records)
        return cls(np.array([Bigram(r.bigram).code for r in records], dtype=np.int64),
                   np.array([r.latency_ms for r in records], dtype=np.int64),
                   np.array([date_to_day(r.day) for r in records], dtype=np.int64))

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self):
        for c, lat, d in zip(self.codes.tolist(), self.latencies.tolist(), self.day_numbers.tolist()):
            yield BigramObservation(Bigram.from_code(c), lat, day_to_date(d))

    @property
    def dropped(self) -> dict[str, int]:
        return {"nonpositive": self.dropped_nonpositive,
                "over_threshold": self.dropped_over_threshold}

    def latencies_for(self, bigram: str) -> np.ndarray:
        return self.latencies[self.codes == Bigram(bigram).code]

    def for_bigram(self, bigram: str) -> "Observations":
        mask = self.codes == Bigram(bigram).code
        return Observations(self.codes[mask], self.latencies[mask], self.day_numbers[mask])


def _as_observations(observations) -> Observations:
    if isinstance(observations, Observations):
        return observations
    return Observations.from_records(observations)


def extract_bigram_observations(stream: KeyStream,
                                config: AnalysisConfig = AnalysisConfig()) -> Observations:
    """Latencies between consecutive letter keystrokes.

    A pair counts only when both tokens are single letters a-z/A-Z (case
    folded) and ``0 < dt <= gap_threshold_ms``. Any other token breaks
    adjacency. Dropped letter pairs are tallied on the result. The
    observation's day is the local date of the pair's first keystroke.
    """
    n = len(stream)
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return Observations(empty, empty, empty)
    letters = np.fromiter((LETTER_INDEX.get(k, -1) for k in stream.keys), dtype=np.int64, count=n)
    ts = stream.timestamps
    gap = ts[1:] - ts[:-1]
    both = (letters[:-1] >= 0) & (letters[1:] >= 0)
    nonpositive = both & (gap <= 0)
    over = both & (gap > config.gap_threshold_ms)
    keep = both & ~nonpositive & ~over
    idx = np.flatnonzero(keep)
    days = stream.local_day_numbers()[idx]
    return Observations(letters[idx] * 26 + letters[idx + 1], gap[idx], days,
                        int(nonpositive.sum()), int(over.sum()))


def rank_bigrams_by_frequency(observations) -> list[tuple[Bigram, int]]:
    """Bigrams by descending count; ties go to the alphabetically first."""
    obs = _as_observations(observations)
    counts = np.bincount(obs.codes, minlength=N_BIGRAMS)
    present = np.flatnonzero(counts)
    order = np.lexsort((present, -counts[present]))
    return [(Bigram.from_code(int(c)), int(counts[c])) for c in present[order]]


def top_k_bigrams(ranking: Sequence[tuple[Bigram, int]], k: int) -> list[Bigram]:
    return [b for b, _ in ranking[:k]]


@dataclass(frozen=True)
class _Groups:
    keys: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    stds: np.ndarray  # NaN where count < 2
    mins: np.ndarray
    maxs: np.ndarray


def _group_stats(keys: np.ndarray, values: np.ndarray) -> _Groups:
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    v = values[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]]) if len(k) else np.empty(0, dtype=np.int64)
    if not len(starts):
        e = np.empty(0)
        return _Groups(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), e, e, e, e)
    counts = np.diff(np.r_[starts, len(k)])
    sums = np.add.reduceat(v, starts)
    means = sums / counts
    dev = v - np.repeat(means, counts)
    ss = np.add.reduceat(dev * dev, starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        stds = np.where(counts > 1, np.sqrt(ss / np.maximum(counts - 1, 1)), np.nan)
    return _Groups(k[starts], counts, means, stds,
                   np.minimum.reduceat(v, starts), np.maximum.reduceat(v, starts))


def _stats_objects(g: _Groups, sl=slice(None)) -> dict[Bigram, BigramStats]:
    out = {}
    for code, n, mean, std, lo, hi in zip(g.keys[sl].tolist(), g.counts[sl].tolist(), g.means[sl].tolist(),
                                          g.stds[sl].tolist(), g.mins[sl].tolist(), g.maxs[sl].tolist()):
        b = Bigram.from_code(code % N_BIGRAMS)
        out[b] = BigramStats(b, n, mean, None if math.isnan(std) else std, lo, hi)
    return out


def compute_bigram_stats(observations) -> tuple[dict[Bigram, BigramStats], Optional[float]]:
    """Per-bigram count/mean/sample std/min/max and the mean over all observations.

    The overall mean weights every observation equally; it is not the mean of
    the bigram means. It is ``None`` when there are no observations.
    """
    obs = _as_observations(observations)
    stats = _stats_objects(_group_stats(obs.codes, obs.latencies))
    overall = float(obs.latencies.mean()) if len(obs) else None
    return stats, overall


def compute_daily_stats(observations) -> DailyStatsTable:
    obs = _as_observations(observations)
    g = _group_stats(obs.day_numbers * N_BIGRAMS + obs.codes, obs.latencies)
    day_of_group = g.keys // N_BIGRAMS
    table: DailyStatsTable = {}
    if not len(day_of_group):
        return table
    cuts = np.flatnonzero(np.diff(day_of_group)) + 1
    bounds = np.r_[0, cuts, len(day_of_group)].tolist()
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        table[day_to_date(int(day_of_group[lo]))] = _stats_objects(g, slice(lo, hi))
    return table


@dataclass(frozen=True)
class DeviationSpread:
    overall_mean_ms: float
    deviations: dict[Bigram, float]

    def fraction_within(self, window_ms: float = 75.0) -> float:
        devs = list(self.deviations.values())
        return sum(abs(d) <= window_ms for d in devs) / len(devs)


def deviation_spread(stats: Mapping[Bigram, BigramStats], overall_mean_ms: float,
                     top_k_set: Iterable[str]) -> DeviationSpread:
    """How far each top-K bigram's mean sits from the overall mean latency."""
    members = [Bigram(b) for b in top_k_set]
    if not members:
        raise ValueError("top_k_set is empty")
    missing = [b for b in members if b not in stats]
    if missing:
        raise KeyError(f"bigrams missing from stats: {missing}")
    return DeviationSpread(overall_mean_ms,
                           {b: stats[b].mean_ms - overall_mean_ms for b in members})


def daily_mean_speed_rankings(table: DailyStatsTable,
                              top_k_bigrams: Sequence[str]) -> dict[dt.date, dict[Bigram, float]]:
    """Per day, fractional rank of each observed top-K bigram by mean latency (1 = fastest)."""
    members = [Bigram(b) for b in top_k_bigrams]
    out = {}
    for day in sorted(table):
        stats = table[day]
        present = [b for b in members if b in stats]
        if not present:
            out[day] = {}
            continue
        ranks = fractional_ranks([stats[b].mean_ms for b in present])
        out[day] = dict(zip(present, ranks.tolist()))
    return out


def _rank_matrix(rankings: Mapping[dt.date, Mapping[Bigram, float]], days, bigrams) -> np.ndarray:
    col = {b: i for i, b in enumerate(bigrams)}
    m = np.full((len(days), len(bigrams)), np.nan)
    for i, d in enumerate(days):
        for b, r in rankings[d].items():
            m[i, col[b]] = r
    return m


def _pair_rho(a: np.ndarray, b: np.ndarray, min_common: int) -> Optional[float]:
    mask = ~np.isnan(a) & ~np.isnan(b)
    if int(mask.sum()) < min_common:
        return None
    try:
        return spearman(a[mask], b[mask])
    except UndefinedCorrelation:
        return None


def consistency_matrix(rankings: Mapping[dt.date, Mapping[Bigram, float]],
                       config: AnalysisConfig = AnalysisConfig(),
                       k: Optional[int] = None) -> ConsistencyMatrix:
    """Spearman correlation between every pair of days' speed rankings.

    Each entry uses only bigrams ranked on both days; fewer than
    ``min_common_bigrams`` of them leaves the entry undefined (``None``).
    The average is over defined entries, off-diagonal unless
    ``include_diagonal`` is set.
    """
    days = sorted(rankings)
    if len(days) < 2:
        raise ValueError("need at least two days")
    bigrams = sorted({b for d in days for b in rankings[d]})
    m = _rank_matrix(rankings, days, bigrams)
    n = len(days)
    rho: list[list[Optional[float]]] = [[None] * n for _ in range(n)]
    off: list[float] = []
    diag: list[float] = []
    for i in range(n):
        if _pair_rho(m[i], m[i], config.min_common_bigrams) is not None:
            rho[i][i] = 1.0
            diag.append(1.0)
        for j in range(i + 1, n):
            r = _pair_rho(m[i], m[j], config.min_common_bigrams)
            rho[i][j] = rho[j][i] = r
            if r is not None:
                off.append(r)
    # symmetric: averaging the full matrix weights each off-diagonal pair twice
    total, count = 2 * math.fsum(off), 2 * len(off)
    if config.include_diagonal:
        total += math.fsum(diag)
        count += len(diag)
    average = total / count if count else None
    return ConsistencyMatrix(tuple(days), config.top_k if k is None else k,
                             tuple(tuple(row) for row in rho), average, count)


@dataclass(frozen=True)
class CrossConsistency:
    average: Optional[float]
    n_defined: int


def cross_consistency(rankings_a: Mapping[dt.date, Mapping[Bigram, float]],
                      rankings_b: Mapping[dt.date, Mapping[Bigram, float]],
                      config: AnalysisConfig = AnalysisConfig()) -> CrossConsistency:
    """Average Spearman over every (day of A, day of B) pair, e.g. two typists."""
    days_a, days_b = sorted(rankings_a), sorted(rankings_b)
    bigrams = sorted({b for r in (*rankings_a.values(), *rankings_b.values()) for b in r})
    ma = _rank_matrix(rankings_a, days_a, bigrams)
    mb = _rank_matrix(rankings_b, days_b, bigrams)
    vals = [r for a in ma for b in mb
            if (r := _pair_rho(a, b, config.min_common_bigrams)) is not None]
    return CrossConsistency(math.fsum(vals) / len(vals) if vals else None, len(vals))


@dataclass(frozen=True)
class SleepCorrelation:
    per_bigram: dict[Bigram, Optional[float]]
    n_days: dict[Bigram, int]
    average_r: Optional[float]
    reason: Optional[str] = None


def correlate_with_sleep(table: DailyStatsTable, sleep: SleepSeries,
                         top_k_bigrams: Sequence[str],
                         exclude_imputed: bool = False) -> SleepCorrelation:
    """Pearson r between each bigram's daily mean latency and that morning's sleep score.

    The score paired with typing day D is the sleep record dated D, i.e. the
    night that ended on the morning of D.
    """
    members = [Bigram(b) for b in top_k_bigrams]
    if not members:
        raise ValueError("empty top-K bigram set")
    days = sorted(table)
    scores = {}
    for d in days:
        rec = sleep.get(d)
        if rec is None:
            raise ValueError(f"sleep series does not cover typing day {d}")
        if not (exclude_imputed and rec.imputed):
            scores[d] = rec.score

    per_bigram: dict[Bigram, Optional[float]] = {}
    n_days: dict[Bigram, int] = {}
    for b in members:
        pairs = [(table[d][b].mean_ms, scores[d]) for d in days if d in scores and b in table[d]]
        n_days[b] = len(pairs)
        r = None
        if len(pairs) >= 2:
            try:
                r = pearson(*zip(*pairs))
            except UndefinedCorrelation:
                pass
        per_bigram[b] = r

    defined = [r for r in per_bigram.values() if r is not None]
    if defined:
        return SleepCorrelation(per_bigram, n_days, math.fsum(defined) / len(defined))
    if len(set(scores.values())) <= 1:
        reason = "sleep scores have zero variance over the typing days"
    else:
        reason = "no bigram has two or more days with varying latency"
    return SleepCorrelation(per_bigram, n_days, None, reason)


def top_overlap(ranking_a: Sequence[str], ranking_b: Sequence[str], k: int) -> int:
    """Size of the intersection of the two lists' first ``k`` entries."""
    if k > len(ranking_a) or k > len(ranking_b):
        raise ValueError(f"k={k} exceeds a ranking's length")
    for r in (ranking_a, ranking_b):
        if len(set(r)) != len(r):
            raise ValueError("rankings must be duplicate-free")
    return len(set(ranking_a[:k]) & set(ranking_b[:k]))


@dataclass(frozen=True)
class BandReport:
    bigram: Optional[Bigram]
    bin_width_ms: float
    bands: tuple[tuple[float, float, int], ...]
    gaps: tuple[tuple[float, float], ...]


def latency_histogram(latencies, bin_width_ms: float = 25, gap_threshold_ms: int = 1000) -> np.ndarray:
    """Counts per bin; bin i covers (i*w, (i+1)*w]. Values outside (0, threshold] are ignored."""
    if bin_width_ms <= 0:
        raise ValueError("bin_width_ms must be positive")
    x = np.asarray(latencies, dtype=float)
    x = x[(x > 0) & (x <= gap_threshold_ms)]
    n_bins = math.ceil(gap_threshold_ms / bin_width_ms)
    idx = np.clip(np.ceil(x / bin_width_ms).astype(np.int64) - 1, 0, n_bins - 1)
    return np.bincount(idx, minlength=n_bins)


def detect_timing_bands(latencies, bigram: Optional[str] = None, bin_width_ms: float = 25,
                        min_band_count: int = 10, min_gap_bins: int = 2,
                        gap_threshold_ms: int = 1000) -> BandReport:
    """Find separated modes in one bigram's latency histogram.

    A band is a maximal run of non-empty bins holding at least
    ``min_band_count`` observations. Between two neighbouring bands a gap is
    reported when they are separated by ``min_gap_bins`` or more consecutive
    empty bins.
    """
    hist = latency_histogram(latencies, bin_width_ms, gap_threshold_ms)
    edge = lambda i: min(i * bin_width_ms, gap_threshold_ms)  # noqa: E731
    nonzero = np.r_[False, hist > 0, False].astype(np.int8)
    change = np.flatnonzero(np.diff(nonzero))
    runs = list(zip(change[::2].tolist(), change[1::2].tolist()))  # [start, stop) bin indices
    bands = [(s, e, int(hist[s:e].sum())) for s, e in runs if hist[s:e].sum() >= min_band_count]
    gaps = []
    for (_, e0, _), (s1, _, _) in zip(bands, bands[1:]):
        between = np.r_[False, hist[e0:s1] == 0, False].astype(np.int8)
        flips = np.flatnonzero(np.diff(between))
        longest = int((flips[1::2] - flips[::2]).max()) if len(flips) else 0
        if longest >= min_gap_bins:
            gaps.append((edge(e0), edge(s1)))
    return BandReport(None if bigram is None else Bigram(bigram), bin_width_ms,
                      tuple((edge(s), edge(e), c) for s, e, c in bands), tuple(gaps))


@dataclass(frozen=True)
class Profile:
    participant_id: str
    means: dict[Bigram, float]
    ranking: dict[Bigram, float] = field(default=None)

    def __post_init__(self):
        means = {Bigram(b): float(v) for b, v in self.means.items()}
        object.__setattr__(self, "means", means)
        if self.ranking is None and means:
            ranks = fractional_ranks(list(means.values()))
            object.__setattr__(self, "ranking", dict(zip(means, ranks.tolist())))
        elif self.ranking is None:
            object.__setattr__(self, "ranking", {})


def build_profile(stats: Mapping[Bigram, BigramStats], participant_id: str,
                  top_k_bigrams: Sequence[str]) -> Profile:
    return Profile(participant_id, {Bigram(b): stats[Bigram(b)].mean_ms
                                    for b in top_k_bigrams if Bigram(b) in stats})


@dataclass(frozen=True)
class ProfileMatch:
    best: str
    scores: dict[str, Optional[float]]


def match_profile(session_stats: Mapping[Bigram, BigramStats], profiles: Sequence[Profile],
                  min_common_bigrams: int = 5) -> ProfileMatch:
    """Pick the enrolled profile whose bigram speed ordering best matches the session's."""
    if not profiles:
        raise ValueError("no profiles to match against")
    ids = [p.participant_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate participant ids among profiles")
    scores: dict[str, Optional[float]] = {}
    for p in sorted(profiles, key=lambda p: p.participant_id):
        shared = [b for b in p.means if b in session_stats]
        score = None
        if len(shared) >= min_common_bigrams:
            try:
                score = spearman([session_stats[b].mean_ms for b in shared],
                                 [p.means[b] for b in shared])
            except UndefinedCorrelation:
                pass
        scores[p.participant_id] = score
    scored = [(s, pid) for pid, s in scores.items() if s is not None]
    if not scored:
        raise ValueError(f"no profile shares {min_common_bigrams} or more rankable bigrams with the session")
    best = min(scored, key=lambda t: (-t[0], t[1]))[1]
    return ProfileMatch(best, scores)
