"""Bigram keystroke-timing analytics for lifelog data."""

from .analysis import (
    NORVIG_TOP10,
    Observations,
    Profile,
    compute_bigram_stats,
    compute_daily_stats,
    consistency_matrix,
    correlate_with_sleep,
    daily_mean_speed_rankings,
    detect_timing_bands,
    deviation_spread,
    extract_bigram_observations,
    match_profile,
    rank_bigrams_by_frequency,
    top_overlap,
)
from .core import (
    AnalysisConfig,
    Bigram,
    BigramObservation,
    BigramStats,
    KeyEvent,
    KeyStream,
    SleepRecord,
    SleepSeries,
    UndefinedCorrelation,
    fractional_ranks,
    pearson,
    spearman,
)
from .ingest import impute_sleep, parse_keystroke_log, parse_sleep_csv, segment_days

__version__ = "0.1.0"
