"""Time ingest + stats + consistency on a synthetic log at participant-1 scale.

Generation and CSV serialization happen first and are not timed. Prints one
JSON object: elapsed seconds of the timed section and the process's peak RSS.

    python scripts/throughput.py --keystrokes 2174539 --days 206
"""

import argparse
import dataclasses
import datetime as dt
import json
import resource
import time

from keydyn import analysis, ingest, synth
from keydyn.core import AnalysisConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--keystrokes", type=int, default=2_174_539)
    ap.add_argument("--days", type=int, default=206)
    ap.add_argument("--top-k", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    per_day, extra = divmod(args.keystrokes, args.days)
    start = dt.date(2020, 1, 1)
    plan = [(start + dt.timedelta(days=i), per_day + (i < extra)) for i in range(args.days)]
    model = dataclasses.replace(synth.random_typist(args.seed, 0, 0), day_plan=plan)
    stream, _ = synth.generate_stream(model)
    data = ingest.format_keystroke_csv(stream)
    del stream

    cfg = AnalysisConfig(top_k=args.top_k)
    t0 = time.perf_counter()
    parsed, report = ingest.parse_keystroke_log(data)
    obs = analysis.extract_bigram_observations(parsed, cfg)
    stats, overall = analysis.compute_bigram_stats(obs)
    ranking = analysis.rank_bigrams_by_frequency(obs)
    top = analysis.top_k_bigrams(ranking, cfg.top_k)
    spread = analysis.deviation_spread(stats, overall, top)
    table = analysis.compute_daily_stats(obs)
    cm = analysis.consistency_matrix(analysis.daily_mean_speed_rankings(table, top), cfg)
    elapsed = time.perf_counter() - t0

    print(json.dumps({
        "n_events": report.events_accepted,
        "n_days": len(table),
        "n_observations": len(obs),
        "overall_mean_ms": round(overall, 3),
        "fraction_within_75ms": round(spread.fraction_within(75), 4),
        "consistency_average": round(cm.average, 4),
        "elapsed_s": round(elapsed, 3),
        "peak_rss_mb": round(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024, 1),
    }))


if __name__ == "__main__":
    main()
