"""Command-line entry point: ``keydyn <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 parse failure, 4 I/O error.

``ingest`` writes a normalized store (``events.csv`` + ``store.json``) into
``--out-dir``; the analysis commands read it from ``--store`` (default: the
output directory) and write their JSON/CSV artifacts next to it.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path
from types import SimpleNamespace as Options
from typing import Optional

from . import analysis, export, ingest, synth
from .core import AnalysisConfig, KeyStream
from .ingest import ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_IO = 4

STORE_EVENTS = "events.csv"
STORE_META = "store.json"

DEFAULTS = {
    "format": None,
    "mode": "strict",
    "participant": "participant",
    "tz_offset_min": 0,
    "gap_threshold_ms": 1000,
    "top_k": 200,
    "min_common_bigrams": 5,
    "include_diagonal": False,
    "seed": 0,
    "out_dir": None,
    "store": None,
    "input": None,
    "sleep": None,
    "profile": None,
    "bigram": None,
    "k_values": None,
    "exclude_imputed": False,
    "days": 20,
    "keystrokes_per_day": 5000,
    "support_size": 676,
    "special_rate": 0.15,
    "start_date": "2020-01-01",
    "sleep_slope": None,
    "sleep_noise": 0.0,
    "sleep_gap_rate": 0.1,
    "bin_width_ms": 25.0,
    "min_band_count": 10,
    "min_gap_bins": 2,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the flags; flags win")
    common.add_argument("--out-dir")
    common.add_argument("--store", help="directory holding an ingested store (default: --out-dir)")
    common.add_argument("--participant")
    common.add_argument("--tz-offset-min", type=int)
    common.add_argument("--gap-threshold-ms", type=int)
    common.add_argument("--top-k", type=int)
    common.add_argument("--min-common-bigrams", type=int)
    common.add_argument("--include-diagonal", action="store_const", const=True)
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="keydyn", description="Bigram keystroke-timing analytics.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="parse keystroke logs into a store")
    s.add_argument("--input", action="append")
    s.add_argument("--format", choices=["csv", "jsonl"])
    s.add_argument("--mode", choices=["strict", "lenient"])

    sub.add_parser("stats", parents=[common], help="per-bigram timing statistics")

    s = sub.add_parser("consistency", parents=[common], help="day-by-day ranking correlations")
    s.add_argument("--k-values", help="comma-separated K values for a summary table, e.g. 5,10,25,50,200")

    s = sub.add_parser("sleep-corr", parents=[common], help="correlate daily latency with sleep score")
    s.add_argument("--sleep")
    s.add_argument("--exclude-imputed", action="store_const", const=True)

    s = sub.add_parser("identify", parents=[common], help="match the store against enrolled profiles")
    s.add_argument("--profile", action="append")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic keystroke log and sleep CSV")
    s.add_argument("--format", choices=["csv", "jsonl"])
    s.add_argument("--days", type=int)
    s.add_argument("--keystrokes-per-day", type=int)
    s.add_argument("--support-size", type=int)
    s.add_argument("--special-rate", type=float)
    s.add_argument("--start-date")
    s.add_argument("--sleep-slope", type=float)
    s.add_argument("--sleep-noise", type=float)
    s.add_argument("--sleep-gap-rate", type=float)

    s = sub.add_parser("export", parents=[common], help="per-bigram scatter CSVs and band reports")
    s.add_argument("--bigram", action="append")
    s.add_argument("--bin-width-ms", type=float)
    s.add_argument("--min-band-count", type=int)
    s.add_argument("--min-gap-bins", type=int)
    return p


def _resolve(ns: argparse.Namespace) -> Options:
    file_cfg = {}
    if ns.config:
        try:
            file_cfg = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"bad config JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise CliError(EXIT_CONFIG, "config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise CliError(EXIT_CONFIG, f"unknown config keys: {sorted(unknown)}")
    values = dict(DEFAULTS)
    values.update(file_cfg)
    for k, v in vars(ns).items():
        if v is not None and k != "config":
            values[k] = v
    for k in ("input", "profile", "bigram"):
        if isinstance(values[k], str):
            values[k] = [values[k]]
    values["command"] = ns.command
    return Options(**values)


def _analysis_config(opt: Options) -> AnalysisConfig:
    try:
        return AnalysisConfig(gap_threshold_ms=int(opt.gap_threshold_ms), top_k=int(opt.top_k),
                              min_common_bigrams=int(opt.min_common_bigrams),
                              include_diagonal=bool(opt.include_diagonal))
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc))


def _out_dir(opt: Options) -> Path:
    if not opt.out_dir:
        raise CliError(EXIT_CONFIG, "--out-dir is required")
    return Path(opt.out_dir)


def _write(path: Path, data: bytes) -> None:
    try:
        export.write_bytes(path, data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}")


def _load_store(opt: Options) -> tuple[KeyStream, dict]:
    store = Path(opt.store or _out_dir(opt))
    try:
        meta = json.loads((store / STORE_META).read_text())
        data = (store / STORE_EVENTS).read_bytes()
    except OSError:
        raise CliError(EXIT_IO, f"no ingested store in {store} (run 'keydyn ingest' first)")
    try:
        stream, _ = ingest.parse_keystroke_log(data, "csv", "strict", meta["participant_id"],
                                               int(meta["tz_offset_minutes"]))
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"corrupt store {store / STORE_EVENTS}: {exc}")
    return stream, meta


def cmd_ingest(opt: Options) -> int:
    if not opt.input:
        raise CliError(EXIT_CONFIG, "--input is required")
    out = _out_dir(opt)
    streams, reports = [], []
    for path in opt.input:
        fmt = opt.format or ("jsonl" if str(path).endswith(".jsonl") else "csv")
        try:
            stream, rep = ingest.read_keystroke_log(path, fmt, opt.mode, opt.participant, int(opt.tz_offset_min))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}")
        except UnicodeDecodeError as exc:
            raise CliError(EXIT_PARSE, f"{path}: not UTF-8: {exc}")
        except ParseError as exc:
            raise CliError(EXIT_PARSE, f"{path}: {exc}")
        streams.append(stream)
        reports.append({"name": Path(path).name, "format": fmt, "events_accepted": rep.events_accepted,
                        "lines_skipped": rep.lines_skipped,
                        "first_error": None if rep.first_error is None else
                        {"line": rep.first_error[0], "message": rep.first_error[1]},
                        "reordered": rep.reordered})
    merged = ingest.merge_streams(streams)
    meta = {"participant_id": opt.participant, "tz_offset_minutes": int(opt.tz_offset_min),
            "n_events": len(merged), "mode": opt.mode, "inputs": reports}
    _write(out / STORE_EVENTS, ingest.format_keystroke_csv(merged))
    _write(out / STORE_META, export.dumps(meta))
    skipped = sum(r["lines_skipped"] for r in reports)
    print(f"{len(merged)} events ({skipped} lines skipped)")
    return EXIT_OK


def _pipeline(opt: Options):
    stream, meta = _load_store(opt)
    cfg = _analysis_config(opt)
    obs = analysis.extract_bigram_observations(stream, cfg)
    return stream, meta, cfg, obs


def cmd_stats(opt: Options) -> int:
    stream, meta, cfg, obs = _pipeline(opt)
    out = _out_dir(opt)
    stats, overall = analysis.compute_bigram_stats(obs)
    ranking = analysis.rank_bigrams_by_frequency(obs)
    top = analysis.top_k_bigrams(ranking, cfg.top_k)
    spread = analysis.deviation_spread(stats, overall, top) if top else None
    pid = meta["participant_id"]
    _write(out / "stats.json", export.dumps(
        export.stats_document(pid, len(stream), obs, stats, overall, ranking, top, spread, cfg)))
    _write(out / "rank_frequency.csv", export.rank_frequency_csv(ranking))
    _write(out / "deviation_histogram.csv", export.deviation_histogram_csv(spread))
    _write(out / "daily_stats.csv", export.daily_stats_csv(analysis.compute_daily_stats(obs)))
    _write(out / "profile.json", export.dumps(
        export.profile_document(analysis.build_profile(stats, pid, top))))
    print(f"{len(obs)} observations over {len(ranking)} bigrams")
    return EXIT_OK


def _consistency_for(obs, cfg: AnalysisConfig, k: int):
    table = analysis.compute_daily_stats(obs)
    if len(table) < 2:
        return None
    top = analysis.top_k_bigrams(analysis.rank_bigrams_by_frequency(obs), k)
    return analysis.consistency_matrix(analysis.daily_mean_speed_rankings(table, top), cfg, k=k)


def cmd_consistency(opt: Options) -> int:
    _, meta, cfg, obs = _pipeline(opt)
    out = _out_dir(opt)
    pid = meta["participant_id"]
    cm = _consistency_for(obs, cfg, cfg.top_k)
    if cm is None:
        doc = {"participant_id": pid, "k": cfg.top_k, "method": "spearman",
               "min_common_bigrams": cfg.min_common_bigrams, "include_diagonal": cfg.include_diagonal,
               "n_days": len(set(obs.day_numbers.tolist())), "average": None, "n_defined": 0,
               "reason": "fewer than two logged days", "days": [], "rho": []}
        _write(out / "consistency.json", export.dumps(doc))
        print("average: undefined (fewer than two logged days)")
        return EXIT_OK
    _write(out / "consistency.json", export.dumps(export.consistency_document(pid, cm, cfg)))
    _write(out / "consistency_matrix.csv", export.matrix_csv(cm))
    if opt.k_values:
        try:
            ks = [int(k) for k in str(opt.k_values).split(",")]
        except ValueError:
            raise CliError(EXIT_CONFIG, f"bad --k-values {opt.k_values!r}")
        rows = []
        for k in ks:
            if not 1 <= k <= 676:
                raise CliError(EXIT_CONFIG, f"K out of range: {k}")
            m = _consistency_for(obs, cfg, k)
            rows.append((k, m.average, m.n_defined))
        _write(out / "consistency_by_k.csv", export.csv_bytes(["k", "average", "n_defined"], rows))
    avg = "undefined" if cm.average is None else export.fmt(cm.average)
    print(f"average: {avg} over {len(cm.days)} days")
    return EXIT_OK


def cmd_sleep_corr(opt: Options) -> int:
    if not opt.sleep:
        raise CliError(EXIT_CONFIG, "--sleep is required")
    _, meta, cfg, obs = _pipeline(opt)
    out = _out_dir(opt)
    try:
        records = ingest.read_sleep_csv(opt.sleep)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {opt.sleep}: {exc}")
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"{opt.sleep}: {exc}")
    table = analysis.compute_daily_stats(obs)
    top = analysis.top_k_bigrams(analysis.rank_bigrams_by_frequency(obs), cfg.top_k)
    pid = meta["participant_id"]
    if not table or not records:
        reason = "no typing days" if not table else "no sleep records"
        doc = {"participant_id": pid, "k": cfg.top_k, "method": "pearson", "alignment": "prior-night",
               "average_r": None, "reason": reason, "bigrams": []}
        _write(out / "sleep_correlation.json", export.dumps(doc))
        print(f"average r: undefined ({reason})")
        return EXIT_OK
    dates = [r.date for r in records] + list(table)
    series = ingest.impute_sleep(records, min(dates), max(dates))
    sc = analysis.correlate_with_sleep(table, series, top, exclude_imputed=bool(opt.exclude_imputed))
    _write(out / "sleep_correlation.json",
           export.dumps(export.sleep_document(pid, sc, cfg.top_k, series, bool(opt.exclude_imputed))))
    _write(out / "sleep_series.csv", export.sleep_series_csv(series))
    avg = "undefined" if sc.average_r is None else export.fmt(sc.average_r)
    print(f"average r: {avg}")
    return EXIT_OK


def cmd_identify(opt: Options) -> int:
    if not opt.profile:
        raise CliError(EXIT_CONFIG, "at least one --profile is required")
    _, _, cfg, obs = _pipeline(opt)
    out = _out_dir(opt)
    profiles = []
    for path in opt.profile:
        try:
            profiles.append(export.profile_from_document(json.loads(Path(path).read_text())))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}")
        except (ValueError, KeyError, TypeError) as exc:
            raise CliError(EXIT_PARSE, f"{path}: bad profile: {exc}")
    stats, _ = analysis.compute_bigram_stats(obs)
    try:
        match = analysis.match_profile(stats, profiles, cfg.min_common_bigrams)
        doc = export.identify_document(match, cfg.min_common_bigrams)
        print(f"best match: {match.best}")
    except ValueError as exc:
        if "duplicate" in str(exc):
            raise CliError(EXIT_CONFIG, str(exc))
        doc = export.identify_document(None, cfg.min_common_bigrams, str(exc))
        print(f"best match: undefined ({exc})")
    _write(out / "identify.json", export.dumps(doc))
    return EXIT_OK


def cmd_synth(opt: Options) -> int:
    out = _out_dir(opt)
    try:
        start = dt.date.fromisoformat(str(opt.start_date))
    except ValueError:
        raise CliError(EXIT_CONFIG, f"bad --start-date {opt.start_date!r}")
    days = int(opt.days)
    if days < 0 or int(opt.keystrokes_per_day) < 0 or not 1 <= int(opt.support_size) <= 676:
        raise CliError(EXIT_CONFIG, "days and keystrokes must be >= 0, support size in [1, 676]")
    seed = int(opt.seed)
    end = start + dt.timedelta(days=max(days - 1, 0))
    link = None
    full_sleep = synth.generate_sleep_series(seed, start, end)
    if opt.sleep_slope is not None:
        link = synth.SleepLink(float(opt.sleep_slope), {r.date: r.score for r in full_sleep},
                               noise_std=float(opt.sleep_noise))
    try:
        model = synth.random_typist(seed, days, int(opt.keystrokes_per_day), int(opt.support_size),
                                    start=start, special_key_rate=float(opt.special_rate),
                                    sleep_link=link, participant_id=opt.participant,
                                    tz_offset_minutes=int(opt.tz_offset_min))
        stream, truth = synth.generate_stream(model)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    fmt = opt.format or "csv"
    writer = ingest.format_keystroke_csv if fmt == "csv" else ingest.format_keystroke_jsonl
    _write(out / f"events.{fmt}", writer(stream))
    if days:
        sleep = synth.generate_sleep_series(seed, start, end, gap_rate=float(opt.sleep_gap_rate),
                                            anchors=[start])
        _write(out / "sleep.csv", ingest.format_sleep_csv(sleep))
    _write(out / "truth.json", export.dumps({
        "seed": seed, "participant_id": opt.participant, "n_events": len(stream),
        "sleep_slope": opt.sleep_slope, "day_offsets_ms": truth.day_offsets,
        "bigram_means_ms": {b: m for b, m in truth.bigram_means.items() if b in model.bigram_latency},
    }))
    print(f"{len(stream)} events over {days} days")
    return EXIT_OK


def cmd_export(opt: Options) -> int:
    if not opt.bigram:
        raise CliError(EXIT_CONFIG, "at least one --bigram is required")
    _, _, cfg, obs = _pipeline(opt)
    out = _out_dir(opt)
    first_day = int(obs.day_numbers.min()) if len(obs) else 0
    for raw in opt.bigram:
        try:
            b = analysis.Bigram(raw)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc))
        lat = obs.latencies_for(b)
        try:
            report = analysis.detect_timing_bands(lat, b, float(opt.bin_width_ms), int(opt.min_band_count),
                                                  int(opt.min_gap_bins), cfg.gap_threshold_ms)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc))
        _write(out / f"scatter_{b}.csv", export.scatter_csv(obs, b, first_day))
        _write(out / f"bands_{b}.json", export.dumps(export.band_document(report, lat, cfg.gap_threshold_ms)))
        print(f"{b}: {len(lat)} observations, {len(report.bands)} bands, {len(report.gaps)} gaps")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "consistency": cmd_consistency,
    "sleep-corr": cmd_sleep_corr,
    "identify": cmd_identify,
    "synth": cmd_synth,
    "export": cmd_export,
}


def main(argv: Optional[list[str]] = None) -> int:
    ns = _parser().parse_args(argv)
    try:
        opt = _resolve(ns)
        return COMMANDS[ns.command](opt)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
