"""JSON documents and plot-ready CSVs.

Floats are written with 6 significant digits so outputs are byte-stable
across platforms. Undefined values are ``null`` in JSON and empty in CSV.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .analysis import (
    BandReport,
    DeviationSpread,
    Observations,
    Profile,
    ProfileMatch,
    SleepCorrelation,
    latency_histogram,
)
from .core import Bigram, BigramStats, ConsistencyMatrix, SleepSeries, day_to_date

SIG_DIGITS = 6


def round_sig(x: float) -> Optional[float]:
    if x is None or math.isnan(x):
        return None
    if math.isinf(x):
        raise ValueError("cannot serialize an infinite value")
    r = float(f"{x:.{SIG_DIGITS}g}")
    return 0.0 if r == 0 else r


def fmt(x) -> str:
    """CSV cell text."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        r = round_sig(float(x))
        return "" if r is None else f"{r:.{SIG_DIGITS}g}"
    return str(x)


def to_jsonable(obj):
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    if isinstance(obj, (dt.date,)):
        return obj.isoformat()
    if isinstance(obj, Mapping):
        return {str(k.isoformat() if isinstance(k, dt.date) else k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> bytes:
    return (json.dumps(to_jsonable(doc), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def stats_document(participant_id: str, n_events: int, obs: Observations,
                   stats: Mapping[Bigram, BigramStats], overall_mean_ms: Optional[float],
                   ranking: Sequence[tuple[Bigram, int]], top_k: Sequence[Bigram],
                   spread: Optional[DeviationSpread], config) -> dict:
    rank_of = {b: i + 1 for i, (b, _) in enumerate(ranking)}
    rows = []
    for b, _ in ranking:
        s = stats[b]
        rows.append({
            "bigram": b, "frequency_rank": rank_of[b], "count": s.count,
            "mean_ms": s.mean_ms, "std_ms": s.std_ms, "min_ms": s.min_ms, "max_ms": s.max_ms,
            "deviation_ms": None if overall_mean_ms is None else s.mean_ms - overall_mean_ms,
        })
    return {
        "participant_id": participant_id,
        "gap_threshold_ms": config.gap_threshold_ms,
        "top_k": config.top_k,
        "n_events": n_events,
        "n_observations": len(obs),
        "dropped_pairs": obs.dropped,
        "overall_mean_ms": overall_mean_ms,
        "n_bigrams": len(ranking),
        "top_k_bigrams": list(top_k),
        "fraction_within_75ms": None if spread is None else spread.fraction_within(75.0),
        "bigrams": rows,
    }


def rank_frequency_csv(ranking: Sequence[tuple[Bigram, int]]) -> bytes:
    return csv_bytes(["rank", "bigram", "count"],
                     ((i + 1, b, n) for i, (b, n) in enumerate(ranking)))


def deviation_histogram_csv(spread: Optional[DeviationSpread], bin_width_ms: float = 25.0) -> bytes:
    rows = []
    if spread is not None and spread.deviations:
        devs = np.array(list(spread.deviations.values()))
        lo = math.floor(devs.min() / bin_width_ms)
        hi = math.floor(devs.max() / bin_width_ms)
        idx = np.floor(devs / bin_width_ms).astype(np.int64) - lo
        counts = np.bincount(idx, minlength=hi - lo + 1)
        rows = [((lo + i) * bin_width_ms, (lo + i + 1) * bin_width_ms, int(c))
                for i, c in enumerate(counts)]
    return csv_bytes(["deviation_low_ms", "deviation_high_ms", "n_bigrams"], rows)


def daily_stats_csv(table) -> bytes:
    rows = ((d, b, s.count, s.mean_ms, s.std_ms, s.min_ms, s.max_ms)
            for d in sorted(table) for b, s in sorted(table[d].items()))
    return csv_bytes(["date", "bigram", "count", "mean_ms", "std_ms", "min_ms", "max_ms"], rows)


def consistency_document(participant_id: str, cm: ConsistencyMatrix, config) -> dict:
    return {
        "participant_id": participant_id,
        "k": cm.k,
        "method": "spearman",
        "min_common_bigrams": config.min_common_bigrams,
        "include_diagonal": config.include_diagonal,
        "n_days": len(cm.days),
        "average": cm.average,
        "n_defined": cm.n_defined,
        "reason": None if cm.average is not None else "no day pair shares enough bigrams",
        "days": list(cm.days),
        "rho": [list(r) for r in cm.rho],
    }


def matrix_csv(cm: ConsistencyMatrix) -> bytes:
    return csv_bytes(["date", *[d.isoformat() for d in cm.days]],
                     ([d, *row] for d, row in zip(cm.days, cm.rho)))


def sleep_document(participant_id: str, sc: SleepCorrelation, k: int, sleep: SleepSeries,
                   exclude_imputed: bool) -> dict:
    return {
        "participant_id": participant_id,
        "k": k,
        "method": "pearson",
        "alignment": "prior-night",
        "exclude_imputed": exclude_imputed,
        "sleep_days": len(sleep),
        "sleep_days_imputed": sum(r.imputed for r in sleep),
        "average_r": sc.average_r,
        "reason": sc.reason,
        "bigrams": [{"bigram": b, "r": r, "n_days": sc.n_days[b]} for b, r in sc.per_bigram.items()],
    }


def sleep_series_csv(sleep: SleepSeries) -> bytes:
    return csv_bytes(["date", "score", "imputed"],
                     ((r.date, float(r.score), int(r.imputed)) for r in sleep))


def profile_document(profile: Profile) -> dict:
    return {"participant_id": profile.participant_id,
            "bigrams": [{"bigram": b, "mean_ms": m, "rank": profile.ranking[b]}
                        for b, m in profile.means.items()]}


def profile_from_document(doc: Mapping) -> Profile:
    return Profile(str(doc["participant_id"]),
                   {Bigram(row["bigram"]): float(row["mean_ms"]) for row in doc["bigrams"]})


def identify_document(match: Optional[ProfileMatch], min_common: int, reason: Optional[str] = None) -> dict:
    return {"method": "spearman", "min_common_bigrams": min_common,
            "best": None if match is None else match.best,
            "scores": {} if match is None else match.scores,
            "reason": reason}


def scatter_csv(obs: Observations, bigram: str, first_day: Optional[int] = None) -> bytes:
    sub = obs.for_bigram(bigram)
    base = first_day if first_day is not None else (int(sub.day_numbers.min()) if len(sub) else 0)
    return csv_bytes(["day_index", "date", "latency_ms"],
                     ((d - base, day_to_date(d), lat)
                      for d, lat in zip(sub.day_numbers.tolist(), sub.latencies.tolist())))


def band_document(report: BandReport, latencies, gap_threshold_ms: int) -> dict:
    hist = latency_histogram(latencies, report.bin_width_ms, gap_threshold_ms)
    return {
        "bigram": report.bigram,
        "bin_width_ms": report.bin_width_ms,
        "n_observations": int(hist.sum()),
        "bands": [{"low_ms": lo, "high_ms": hi, "count": c} for lo, hi, c in report.bands],
        "gaps": [{"low_ms": lo, "high_ms": hi} for lo, hi in report.gaps],
        "histogram": hist.tolist(),
    }
