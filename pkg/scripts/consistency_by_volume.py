"""Consistency average versus K for a heavy and a light synthetic typist.

Both typists share one latency profile; only daily volume differs. Fewer
keystrokes per day means noisier daily means and lower day-to-day agreement.

    python scripts/consistency_by_volume.py --seed 1
"""

import argparse
import dataclasses

from keydyn import analysis, synth
from keydyn.core import AnalysisConfig

K_VALUES = (5, 10, 25, 50, 200)


def averages(model, k_values):
    stream, _ = synth.generate_stream(model)
    obs = analysis.extract_bigram_observations(stream)
    ranking = analysis.rank_bigrams_by_frequency(obs)
    table = analysis.compute_daily_stats(obs)
    out = {}
    for k in k_values:
        top = analysis.top_k_bigrams(ranking, k)
        cm = analysis.consistency_matrix(analysis.daily_mean_speed_rankings(table, top), AnalysisConfig(top_k=k))
        out[k] = cm.average
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--days", type=int, default=60)
    ap.add_argument("--heavy", type=int, default=10_000, help="keystrokes per day")
    ap.add_argument("--light", type=int, default=1_000, help="keystrokes per day")
    args = ap.parse_args()

    base = synth.random_typist(args.seed, args.days, args.heavy)
    light = dataclasses.replace(base, day_plan=[(d, args.light) for d, _ in base.day_plan])
    rows = {"heavy": averages(base, K_VALUES), "light": averages(light, K_VALUES)}

    print("typist," + ",".join(f"k{k}" for k in K_VALUES))
    for name, vals in rows.items():
        print(name + "," + ",".join("" if vals[k] is None else f"{vals[k]:.3f}" for k in K_VALUES))


if __name__ == "__main__":
    main()
