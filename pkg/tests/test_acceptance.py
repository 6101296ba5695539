"""Acceptance suite. Each test records one PASS/FAIL line in the terminal summary."""

import datetime as dt
import hashlib
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from acceptance_log import criterion
from keydyn.analysis import (
    NORVIG_TOP10,
    compute_bigram_stats,
    compute_daily_stats,
    consistency_matrix,
    correlate_with_sleep,
    cross_consistency,
    daily_mean_speed_rankings,
    detect_timing_bands,
    extract_bigram_observations,
    rank_bigrams_by_frequency,
    top_k_bigrams,
    top_overlap,
)
from keydyn.cli import main as cli_main
from keydyn.core import ALL_BIGRAMS, AnalysisConfig, KeyStream, SleepRecord, pearson, spearman
from keydyn.ingest import impute_sleep
from keydyn.synth import SPECIAL_KEYS, SleepLink, TypistModel, generate_sleep_series, generate_stream, random_typist
from oracles import brute_force_observations

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "participant_targets.json").read_text())
START = dt.date(2020, 1, 1)


def _random_stream(rng: np.random.Generator):
    n = int(rng.integers(0, 1001))
    letters = list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    others = list(SPECIAL_KEYS) + ["1", ",", " ", "é"]
    special_rate = rng.uniform(0, 0.5)
    keys = [others[rng.integers(len(others))] if rng.random() < special_rate else letters[rng.integers(len(letters))]
            for _ in range(n)]
    # gaps cluster on both sides of the 1000 ms cutoff, plus zeros and long pauses
    kind = rng.integers(0, 4, size=n)
    gaps = np.select(
        [kind == 0, kind == 1, kind == 2],
        [rng.integers(0, 3, size=n), rng.integers(995, 1006, size=n), rng.integers(1, 1000, size=n)],
        rng.integers(1000, 200_000_000, size=n),
    )
    ts = 1_577_836_800_000 + int(rng.integers(0, 10**9)) + np.cumsum(gaps)
    tz = int(rng.integers(-720, 841))
    return list(zip(ts.tolist(), keys)), tz


def test_extraction_matches_brute_force():
    with criterion("1 extraction oracle equivalence") as d:
        rng = np.random.default_rng(20200101)
        streams = [_random_stream(rng) for _ in range(1000)]
        t0 = time.perf_counter()
        mismatches = 0
        for events, tz in streams:
            stream = KeyStream.from_events(events, tz_offset_minutes=tz)
            got = [(o.bigram, o.latency_ms, o.day) for o in extract_bigram_observations(stream)]
            mismatches += got != brute_force_observations(events, tz)
        elapsed = time.perf_counter() - t0
        d.update(streams=len(streams), mismatches=mismatches, seconds=round(elapsed, 2))
        assert mismatches == 0
        assert elapsed < 10


def test_statistical_recovery():
    with criterion("2 statistical recovery within 3 sigma/sqrt(n)") as d:
        t0 = time.perf_counter()
        model = random_typist(11, 30, 5000, support_size=50)
        stream, truth = generate_stream(model)
        stats, _ = compute_bigram_stats(extract_bigram_observations(stream))
        _, stds = model.latency_tables()
        checked = [b for b, s in stats.items() if s.count >= 100]
        passed = sum(abs(stats[b].mean_ms - truth.bigram_means[b]) <= 3 * stds[b.code] / math.sqrt(stats[b].count)
                     for b in checked)
        elapsed = time.perf_counter() - t0
        d.update(bigrams=len(checked), passed=passed, seconds=round(elapsed, 2))
        assert len(checked) >= 40
        assert passed / len(checked) >= 0.99
        assert elapsed < 30


def _rankings(model, top=None):
    stream, _ = generate_stream(model)
    obs = extract_bigram_observations(stream)
    if top is None:
        top = top_k_bigrams(rank_bigrams_by_frequency(obs), 50)
    return daily_mean_speed_rankings(compute_daily_stats(obs), top), top


def test_consistency_discrimination():
    with criterion("3 consistency discrimination") as d:
        same, top = _rankings(random_typist(3, 20, 5000))
        avg_same = consistency_matrix(same, AnalysisConfig(top_k=50)).average
        other, _ = _rankings(random_typist(4, 20, 5000), top)
        avg_cross = cross_consistency(same, other, AnalysisConfig(top_k=50)).average
        d.update(same_profile=round(avg_same, 4), independent=round(avg_cross, 4))
        assert avg_same > 0.8
        assert abs(avg_cross) < 0.3


def test_sleep_recovery():
    with criterion("4 sleep-link recovery and null case") as d:
        days = [START + dt.timedelta(days=i) for i in range(40)]
        scores = {r.date: r.score for r in generate_sleep_series(5, days[0], days[-1])}
        model = TypistModel(seed=5, bigram_latency={b: (300.0, 0.0) for b in ALL_BIGRAMS},
                            day_plan=[(x, 1500) for x in days], special_latency=(300.0, 0.0),
                            default_latency=(300.0, 0.0), sleep_link=SleepLink(-1.0, scores))
        stream, _ = generate_stream(model)
        obs = extract_bigram_observations(stream)
        table = compute_daily_stats(obs)
        series = impute_sleep([SleepRecord(x, s) for x, s in scores.items()], days[0], days[-1])
        top = top_k_bigrams(rank_bigrams_by_frequency(obs), 50)
        linked = correlate_with_sleep(table, series, top)
        defined = [r for r in linked.per_bigram.values() if r is not None]
        worst = max(abs(r + 1.0) for r in defined)

        n = 200
        null_model = random_typist(6, n, 1000)
        stream, _ = generate_stream(null_model)
        obs = extract_bigram_observations(stream)
        series = impute_sleep(generate_sleep_series(1006, START, START + dt.timedelta(days=n - 1)),
                              START, START + dt.timedelta(days=n - 1))
        null = correlate_with_sleep(compute_daily_stats(obs), series,
                                    top_k_bigrams(rank_bigrams_by_frequency(obs), 50))
        d.update(defined=len(defined), max_dev=worst, linked_avg=linked.average_r,
                 null_avg=round(null.average_r, 4))
        assert len(defined) == 50
        assert worst <= 1e-9
        assert abs(linked.average_r + 1.0) <= 1e-9
        assert abs(null.average_r) < 0.2


def test_fixture_arithmetic():
    with criterion("5 fixture arithmetic") as d:
        p = FIXTURE["participants"]
        assert tuple(FIXTURE["norvig_top10"]) == NORVIG_TOP10
        o1 = top_overlap(p["1"]["top10"], NORVIG_TOP10, 10)
        o2 = top_overlap(p["2"]["top10"], NORVIG_TOP10, 10)
        values = [spearman([1, 2, 3, 4], [10, 20, 30, 40]), spearman([1, 2, 3, 4], [4, 3, 2, 1]),
                  spearman([1, 2, 3, 4], [1, 2, 4, 3]), pearson([1, 2, 3], [2, 4, 7])]
        expected = [1.0, -1.0, 0.8, 0.9933992677987828]
        d.update(overlap_p1=o1, overlap_p2=o2, values=[round(v, 12) for v in values])
        assert (o1, o2) == (9, 7)
        assert all(abs(v - e) <= 1e-9 for v, e in zip(values, expected))


def test_throughput_at_participant_scale():
    with criterion("6 throughput at 2.17M keystrokes") as d:
        proc = subprocess.run([sys.executable, str(ROOT / "scripts" / "throughput.py"),
                               "--keystrokes", "2174539", "--days", "206"],
                              capture_output=True, text=True, check=True)
        out = json.loads(proc.stdout)
        d.update(events=out["n_events"], days=out["n_days"], seconds=out["elapsed_s"], peak_rss_mb=out["peak_rss_mb"])
        assert out["n_events"] == 2_174_539 and out["n_days"] == 206
        assert out["elapsed_s"] < 10
        assert out["peak_rss_mb"] < 1024


def _digest(directory: Path) -> dict:
    return {str(p.relative_to(directory)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def test_cli_determinism(tmp_path):
    with criterion("7 CLI determinism") as d:
        def run(*args):
            assert cli_main([str(a) for a in args]) == 0, args

        for rep in ("a", "b"):
            base = tmp_path / rep
            run("synth", "--seed", 21, "--days", 6, "--keystrokes-per-day", 3000, "--sleep-slope", -0.5,
                "--sleep-noise", 3, "--sleep-gap-rate", 0.2, "--out-dir", base / "synth")
            run("ingest", "--input", base / "synth" / "events.csv", "--participant", "p21", "--out-dir", base / "store")
            run("stats", "--store", base / "store", "--out-dir", base / "stats", "--top-k", 50)
            run("consistency", "--store", base / "store", "--out-dir", base / "consistency", "--k-values", "5,10,50")
            run("sleep-corr", "--store", base / "store", "--out-dir", base / "sleep",
                "--sleep", base / "synth" / "sleep.csv", "--top-k", 20)
            run("identify", "--store", base / "store", "--out-dir", base / "identify",
                "--profile", base / "stats" / "profile.json")
            run("export", "--store", base / "store", "--out-dir", base / "export", "--bigram", "th", "--bigram", "he")
        a, b = _digest(tmp_path / "a"), _digest(tmp_path / "b")
        differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
        d.update(files=len(a), differing=len(differing))
        assert len(a) >= 15
        assert not differing, differing


def test_banding_oracle():
    with criterion("8 banding oracle over 50 seeds") as d:
        bimodal_ok = unimodal_ok = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            mix = np.rint(np.concatenate([rng.normal(150, 30, 1000), rng.normal(450, 30, 1000)]))
            rep = detect_timing_bands(mix)
            bimodal_ok += len(rep.bands) == 2 and len(rep.gaps) == 1
            rep = detect_timing_bands(np.rint(rng.normal(250, 30, 1000)))
            unimodal_ok += len(rep.bands) == 1 and not rep.gaps
        d.update(bimodal=f"{bimodal_ok}/50", unimodal=f"{unimodal_ok}/50")
        assert bimodal_ok == 50 and unimodal_ok == 50
